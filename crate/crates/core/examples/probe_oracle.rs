use safeq_core::oracle::{run_oracle_benchmark, OracleBenchConfig};
use std::time::Instant;

fn main() {
    let cfg = OracleBenchConfig::default();
    let start = Instant::now();
    match run_oracle_benchmark(&[0, 1, 2], &cfg, None) {
        Ok(reports) => {
            for r in &reports {
                println!(
                    "seed {}: pass={} steps={:?} learner V_r={:.4} V_c={:.4} | oracle V_r={:.4} V_c={:.4} budget={:.4}",
                    r.seed, r.passed, r.steps_to_meet, r.learner_v_r,
                    r.learner_v_c[0], r.oracle_v_r, r.oracle_v_c[0], r.budgets[0]
                );
            }
        }
        Err(e) => println!("ERROR: {e}"),
    }
    println!("elapsed: {:?}", start.elapsed());
}
