//! Shared fixtures for the criterion benchmarks.

use volterra_core::estimator::EbProblem;
use volterra_core::metrics::timing_hyper;
use volterra_core::simulator::build_databank;
use volterra_core::{BankKind, BankSpec, FitConfig, KernelHyper, KernelVariant, SolverPath};

/// A D4-like training record of length `n` and an EB problem for `variant` on `path`.
pub fn eb_fixture(
    variant: &str,
    path: SolverPath,
    n: usize,
    memory: usize,
) -> (EbProblem, KernelHyper) {
    let mut spec = BankSpec::new(BankKind::D4like, 1, 0);
    spec.n_train = n;
    spec.n_test = Some(1);
    let ds = build_databank(&spec).expect("bank").remove(0);
    let mut cfg = FitConfig::new(KernelVariant::preset(variant).expect("preset"), 3, memory);
    cfg.path = path;
    let desc_memory = (path == SolverPath::FastSeparable).then_some(memory);
    let data = ds.training_data(desc_memory).expect("training data");
    let problem = EbProblem::new(&data, &cfg).expect("problem");
    assert_eq!(problem.path(), path);
    let h = timing_hyper(&cfg, problem.output_variance());
    (problem, h)
}
