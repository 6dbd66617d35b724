//! Checks the analytic per-step growth factor of the SGD recursion against
//! an ensemble of simulated trajectories.
//!
//!     cargo run --release --example monte_carlo -- [trajectories]

use breakeven::quadratic::{monte_carlo_growth, stability_lhs, QuadraticModel, SgdSetting};

fn main() {
    let trajectories = std::env::args()
        .nth(1)
        .map_or(10_000, |a| a.parse().expect("integer"));
    let model = QuadraticModel::uniform(100, 0.0, 2.0, 0.5, 3).expect("valid model");
    println!(
        "{:>5} {:>4} {:>10} {:>10} {:>10}",
        "eta", "S", "log lhs", "mc slope", "diff"
    );
    for (eta, s) in [(0.5, 1), (0.5, 10), (1.0, 5), (1.5, 50), (1.9, 100)] {
        let setting = SgdSetting::new(eta, s);
        let est = monte_carlo_growth(&model, &setting, 1.0, trajectories, 200, 11)
            .expect("valid setting");
        let lhs = stability_lhs(&model, &setting).unwrap();
        println!(
            "{eta:>5} {s:>4} {:>10.5} {:>10.5} {:>10.5}",
            lhs.ln(),
            est.growth_rate,
            (est.growth_rate - est.log_lhs).abs()
        );
    }
}
