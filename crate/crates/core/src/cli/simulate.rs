use crate::quadratic::{
    breakeven_curvature_closed_form, monte_carlo_growth, run_growth_dynamics, stability_lhs,
    GrowthSchedule, QuadraticError, SgdSetting, Stability, PHASE_BAND,
};
use crate::trainer::config_hash;
use std::fmt::Write;

use super::{CliError, SimulateConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateTables {
    pub phase_diagram: String,
    pub breakeven: String,
    pub growth: Option<String>,
    pub mc_validation: Option<String>,
    pub any_no_flip: bool,
}

impl SimulateTables {
    pub fn files(&self) -> Vec<(&'static str, &String)> {
        let mut v = vec![
            ("phase_diagram.csv", &self.phase_diagram),
            ("breakeven.csv", &self.breakeven),
        ];
        if let Some(g) = &self.growth {
            v.push(("growth.csv", g));
        }
        if let Some(m) = &self.mc_validation {
            v.push(("mc_validation.csv", m));
        }
        v
    }
}

fn schema(field: &str, e: QuadraticError) -> CliError {
    CliError::Schema {
        field: field.into(),
        reason: e.to_string(),
    }
}

/// Builds every CSV table for a resolved simulate config.
pub fn simulate_tables(cfg: &SimulateConfig) -> Result<SimulateTables, CliError> {
    let model = cfg.model.build(cfg.seed)?;
    let n = model.n();
    if let Some(&s) = cfg.batch_sizes.iter().find(|&&s| s > n) {
        return Err(CliError::Schema {
            field: "batch_sizes".into(),
            reason: format!("{s} exceeds N = {n}"),
        });
    }
    let header = format!(
        "# breakeven simulate config_hash={} config={}\n",
        config_hash(cfg),
        serde_json::to_string(cfg).expect("config serializes")
    );
    let cells: Vec<(f64, usize)> = cfg
        .etas
        .iter()
        .flat_map(|&eta| cfg.batch_sizes.iter().map(move |&s| (eta, s)))
        .collect();

    let mut phase = header.clone();
    phase.push_str("eta,batch_size,lhs,stability\n");
    for &(eta, s) in &cells {
        let lhs = stability_lhs(&model, &SgdSetting::new(eta, s)).map_err(|e| schema("etas", e))?;
        let _ = writeln!(
            phase,
            "{eta},{s},{lhs},{}",
            Stability::classify(lhs, PHASE_BAND).as_str()
        );
    }

    let mut be = header.clone();
    be.push_str("eta,batch_size,n,alpha,psi,lambda_star,two_over_eta,non_positive\n");
    for &eta in &cfg.etas {
        let mut sizes = cfg.batch_sizes.clone();
        if !sizes.contains(&n) {
            sizes.push(n);
        }
        for s in sizes {
            let b = breakeven_curvature_closed_form(eta, s, n, model.alpha(), cfg.breakeven_psi)
                .map_err(|e| schema("breakeven_psi", e))?;
            let _ = writeln!(
                be,
                "{eta},{s},{n},{},{},{},{},{}",
                model.alpha(),
                cfg.breakeven_psi,
                b.lambda,
                2.0 / eta,
                b.non_positive
            );
        }
    }

    let mut any_no_flip = false;
    let growth = match &cfg.growth {
        None => None,
        Some(g) => {
            let schedule = GrowthSchedule {
                direction: g.direction,
                lambda0: g.lambda0,
                rho: g.rho,
                psi0: g.psi0,
            };
            schedule.validate().map_err(|e| schema("growth", e))?;
            let direction = serde_json::to_value(g.direction).expect("serializes");
            let direction = direction.as_str().unwrap_or_default().to_string();
            let mut t = header.clone();
            t.push_str(
                "eta,batch_size,direction,lambda0,rho,psi0,lambda_at_flip,lambda_max,psi_at_stop,step_of_breakeven,status\n",
            );
            for &(eta, s) in &cells {
                let prefix = format!("{eta},{s},{direction},{},{},{}", g.lambda0, g.rho, g.psi0);
                match run_growth_dynamics(
                    &SgdSetting::new(eta, s),
                    &schedule,
                    model.alpha(),
                    n,
                    g.max_steps,
                ) {
                    Ok(o) => {
                        let _ = writeln!(
                            t,
                            "{prefix},{},{},{},{},ok",
                            o.lambda_at_flip, o.lambda_max, o.psi_at_stop, o.step_of_breakeven
                        );
                    }
                    Err(QuadraticError::NoFlip {
                        steps,
                        lambda_max,
                        psi,
                    }) => {
                        any_no_flip = true;
                        let _ = writeln!(t, "{prefix},,{lambda_max},{psi},{steps},no_flip");
                    }
                    Err(QuadraticError::InvalidSchedule(_)) => {
                        let _ = writeln!(t, "{prefix},,,,,starts_flipped");
                    }
                    Err(e) => return Err(schema("growth", e)),
                }
            }
            Some(t)
        }
    };

    let mc_validation = match &cfg.monte_carlo {
        None => None,
        Some(mc) => {
            let mut t = header.clone();
            t.push_str("eta,batch_size,lhs,log_lhs,growth_rate,abs_diff\n");
            for &(eta, s) in &cells {
                let setting = SgdSetting::new(eta, s);
                let lhs = stability_lhs(&model, &setting).map_err(|e| schema("etas", e))?;
                let est = monte_carlo_growth(
                    &model,
                    &setting,
                    mc.psi0,
                    mc.trajectories,
                    mc.steps,
                    cfg.seed,
                )
                .map_err(|e| schema("monte_carlo", e))?;
                let _ = writeln!(
                    t,
                    "{eta},{s},{lhs},{},{},{}",
                    est.log_lhs,
                    est.growth_rate,
                    (est.growth_rate - est.log_lhs).abs()
                );
            }
            Some(t)
        }
    };

    Ok(SimulateTables {
        phase_diagram: phase,
        breakeven: be,
        growth,
        mc_validation,
        any_no_flip,
    })
}
