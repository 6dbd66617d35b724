//! Stability map of the one-parameter quadratic model, the break-even
//! curvature table and a curvature-growth run.
//!
//!     cargo run --release --example quadratic_stability

use breakeven::quadratic::{
    breakeven_curvature_closed_form, phase_diagram, run_growth_dynamics, GrowthDirection,
    GrowthSchedule, QuadraticModel, SgdSetting,
};

fn main() {
    let model = QuadraticModel::uniform(100, 0.0, 2.0, 0.5, 0).expect("valid model");
    let etas = [0.5, 1.0, 1.5, 1.9, 2.1];
    let sizes = [1, 5, 20, 100];
    let grid = phase_diagram(&etas, &sizes, &model).expect("valid grid");
    println!(
        "mean curvature {:.4}, variance {:.4}",
        model.lambda_h(),
        model.curvature_variance()
    );
    print!("{:>6}", "S\\eta");
    for e in etas {
        print!("{e:>10}");
    }
    println!();
    for (s, row) in sizes.iter().zip(&grid) {
        print!("{s:>6}");
        for cell in row {
            print!("{:>10}", cell.as_str());
        }
        println!();
    }

    println!("\nbreak-even curvature (alpha = 0.5, psi = 1, N = 100)");
    for eta in [0.5, 0.1, 0.02] {
        let row: Vec<String> = [1, 10, 50, 100]
            .iter()
            .map(|&s| {
                format!(
                    "S={s}: {:.3}",
                    breakeven_curvature_closed_form(eta, s, 100, 0.5, 1.0)
                        .unwrap()
                        .lambda
                )
            })
            .collect();
        println!("eta={eta:<5} {}", row.join("  "));
    }

    println!("\ncurvature growing from 0.1 (rho = 1.01): where does training lose stability?");
    let schedule = GrowthSchedule {
        direction: GrowthDirection::IncreasingFromStable,
        lambda0: 0.1,
        rho: 1.01,
        psi0: 1.0,
    };
    for eta in [0.5, 0.1] {
        for s in [1, 10, 100] {
            match run_growth_dynamics(&SgdSetting::new(eta, s), &schedule, 0.5, 100, 100_000) {
                Ok(o) => println!(
                    "eta={eta:<4} S={s:<4} flips at lambda {:.3} after {} steps",
                    o.lambda_at_flip, o.step_of_breakeven
                ),
                Err(e) => println!("eta={eta:<4} S={s:<4} {e}"),
            }
        }
    }
}
