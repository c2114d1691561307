//! Fixtures shared by the benchmarks.

use rsodc::datagen::{generate, SimulationConfig};
use rsodc::{Params, ProblemInstance};

/// Data at the standard three-cluster simulation cell (`n = 60`, `p = 20`).
pub fn sim_instance(n: usize, p: usize, seed: u64) -> ProblemInstance {
    let mut cfg = SimulationConfig::new(n, p, 3, 2.2, 0.5, seed);
    if rsodc::datagen::default_c_star(p).is_none() {
        cfg.c_star = Some((p - 2) / 2);
    }
    let data = generate(&cfg).expect("valid simulation config");
    ProblemInstance::new(data.x, 3, Params::default()).expect("valid instance")
}
