use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use volterra_core::estimator::EbProblem;
use volterra_core::kernels::{
    dc_eval, dc_gram, dense_kernel_matrix, mercer_error, min_eig_check, wh_kernel_eval,
    zeta_vector, EigenSign,
};
use volterra_core::metrics::fit_percent;
use volterra_core::output_kernel::output_kernel;
use volterra_core::separable::{
    semiseparable_apply, separate_input, InputFamily, SemiseparableKernelDesc,
};
use volterra_core::simulator::{build_databank, random_stable_lti};
use volterra_core::{
    BankKind, BankSpec, BlockStructure, DcParams, FitConfig, InitPolicy, Kappa2, KernelHyper,
    KernelVariant, SolverPath, TrainingData, ZetaSpec,
};

fn dc_params() -> impl Strategy<Value = DcParams> {
    (0.3..2.0f64, 0.01..1.5f64, 0.0..1.5f64).prop_map(|(c, alpha, beta)| DcParams {
        c,
        alpha,
        beta,
    })
}

fn zeta() -> impl Strategy<Value = ZetaSpec> {
    prop_oneof![
        Just(ZetaSpec::exp_decay()),
        (1usize..120).prop_map(ZetaSpec::ortho_basis)
    ]
}

fn structure() -> impl Strategy<Value = BlockStructure> {
    prop_oneof![Just(BlockStructure::Full), Just(BlockStructure::Diagonal)]
}

fn kappa2() -> impl Strategy<Value = Kappa2> {
    prop_oneof![Just(Kappa2::Delta), dc_params().prop_map(Kappa2::Dc)]
}

fn hyper(max_n: usize, max_m: usize) -> impl Strategy<Value = KernelHyper> {
    (
        1..=max_n,
        prop::collection::vec(-2.0..2.0f64, 1..=max_m),
        dc_params(),
        kappa2(),
        zeta(),
        structure(),
    )
        .prop_map(|(n, a, k1, k2, zeta, structure)| KernelHyper {
            a,
            h0: 0.0,
            k1,
            k2,
            zeta,
            structure,
            sigma2: 0.1,
            memory: n,
        })
}

fn signal(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.5..1.5f64, len)
}

fn rel_max_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(b.amax()).max(f64::MIN_POSITIVE);
    (a - b).amax() / scale
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn wh_kernel_is_symmetric(
        h in hyper(4, 3),
        p in 1usize..=3,
        q in 1usize..=3,
        lags in prop::collection::vec(0i64..8, 6),
    ) {
        let n = h.memory;
        let (t, s) = (&lags[..p], &lags[3..3 + q]);
        let ts = wh_kernel_eval(t, s, 0.7, -1.3, &h.k1, &h.k2, &h.zeta, n);
        let st = wh_kernel_eval(s, t, -1.3, 0.7, &h.k1, &h.k2, &h.zeta, n);
        prop_assert!((ts - st).abs() <= 1e-12 * (1.0 + ts.abs()), "{ts} vs {st}");
    }

    #[test]
    fn prior_covariance_is_psd(h in hyper(4, 3)) {
        let p = dense_kernel_matrix(&h).unwrap();
        prop_assert!(min_eig_check(&p, 1e-8));
    }

    #[test]
    fn k1_dominates_zeta_outer_product(k1 in dc_params(), z in zeta(), n in 1usize..=50) {
        let zv = zeta_vector(n, &z, &k1);
        let m = dc_gram(n, &k1) - &zv * zv.transpose();
        prop_assert!(min_eig_check(&m, 1e-8));
    }

    #[test]
    fn mercer_error_does_not_grow_with_terms(k1 in dc_params(), n in 2usize..=30) {
        let errs: Vec<f64> = (1..=25)
            .map(|l| mercer_error(l, n, &k1, EigenSign::Printed))
            .collect();
        for w in errs.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-9) + 1e-14, "{errs:?}");
        }
    }

    #[test]
    fn output_kernel_is_symmetric(h in hyper(4, 3), u in signal(30)) {
        let q = output_kernel(&h, &u, InitPolicy::PreWindowZero).unwrap().q;
        prop_assert!(rel_max_diff(&q, &q.transpose()) <= 1e-12);
    }

    #[test]
    fn output_kernel_degree_scaling(
        mut h in hyper(4, 3),
        u in signal(25),
        lambda in 0.3..2.5f64,
    ) {
        let order = h.order();
        h.k2 = Kappa2::Delta;
        for p in 1..=order {
            let mut single = h.clone();
            single.a = (1..=order).map(|m| if m == p { 1.0 } else { 0.0 }).collect();
            let q = output_kernel(&single, &u, InitPolicy::PreWindowZero).unwrap().q;
            let scaled: Vec<f64> = u.iter().map(|v| lambda * v).collect();
            let qs = output_kernel(&single, &scaled, InitPolicy::PreWindowZero).unwrap().q;
            let expect = q * lambda.powi(2 * p as i32);
            prop_assert!(rel_max_diff(&qs, &expect) <= 1e-10, "p = {p}");
        }
    }

    #[test]
    fn semiseparable_apply_matches_dense(
        k1 in dc_params(),
        n in 1usize..=200,
        cols in 1usize..4,
    ) {
        let desc = SemiseparableKernelDesc::dc(&k1, n);
        prop_assume!(desc.is_some());
        let h = DMatrix::from_fn(n, cols, |i, j| ((i * 7 + j * 3) % 11) as f64 - 5.0);
        let dense = DMatrix::from_fn(n, n, |t, s| dc_eval(t, s, &k1)) * &h;
        let fast = semiseparable_apply(&desc.unwrap(), &h);
        prop_assert!(rel_max_diff(&fast, &dense) <= 1e-10);
    }

    #[test]
    fn fit_percent_is_at_most_100(
        reference in prop::collection::vec(-5.0..5.0f64, 3..40),
        noise in prop::collection::vec(-1.0..1.0f64, 40),
    ) {
        prop_assume!(reference.iter().any(|v| (v - reference[0]).abs() > 1e-6));
        prop_assert_eq!(fit_percent(&reference, &reference).unwrap(), 100.0);
        let est: Vec<f64> = reference.iter().zip(&noise).map(|(r, e)| r + e).collect();
        let f = fit_percent(&reference, &est).unwrap();
        prop_assert!(f <= 100.0);
        if noise[..reference.len()].iter().any(|&e| e != 0.0) {
            prop_assert!(f < 100.0);
        }
    }

    #[test]
    fn random_systems_keep_poles_in_range(
        order in 1usize..8,
        lo in 0.05..0.9f64,
        width in 0.0..0.09f64,
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let hi = lo + width;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let sys = random_stable_lti(order, (lo, hi), None, &mut rng).unwrap();
        prop_assert_eq!(sys.poles.len(), order);
        for p in &sys.poles {
            let r = p.norm();
            prop_assert!(r >= lo - 1e-12 && r <= hi + 1e-12 && r < 1.0, "pole modulus {r}");
        }
    }
}

fn separable_data(len: usize, n: usize, decay: f64, omega: f64) -> TrainingData {
    let fam = InputFamily::DampedSinusoid {
        amplitude: 1.0,
        decay,
        omega,
        phase: 0.3,
    };
    let u: Vec<f64> = (0..len).map(|t| fam.value(t as f64).unwrap()).collect();
    let y: Vec<f64> = u
        .iter()
        .enumerate()
        .map(|(t, v)| 0.8 * v + 0.4 * v * v + 0.05 * ((t * 37 % 17) as f64 - 8.0) / 8.0)
        .collect();
    TrainingData::new(u, y).with_input(separate_input(fam, len, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn dense_and_fast_costs_agree(
        k1 in dc_params(),
        a in prop::collection::vec(-1.5..1.5f64, 2..=3),
        decay in 0.0..0.02f64,
        omega in 0.2..2.5f64,
        variant in prop::sample::select(vec!["dc-bd-w", "dc-decay-w", "dc-ob-w"]),
    ) {
        let n = 6;
        let data = separable_data(150, n, decay, omega);
        let dense = FitConfig::new(KernelVariant::preset(variant).unwrap(), a.len(), n);
        let mut fast = dense.clone();
        fast.path = SolverPath::FastSeparable;
        let h = KernelHyper {
            a,
            h0: 0.0,
            k1,
            k2: Kappa2::Delta,
            zeta: dense.variant.zeta,
            structure: dense.variant.structure,
            sigma2: 0.05,
            memory: n,
        };
        let pd = EbProblem::new(&data, &dense).unwrap();
        let pf = EbProblem::new(&data, &fast).unwrap();
        prop_assert_eq!(pf.path(), SolverPath::FastSeparable);
        let (ed, ef) = (pd.evaluate(&h).unwrap(), pf.evaluate(&h).unwrap());
        prop_assert!((ed.cost - ef.cost).abs() <= 1e-6 * ed.cost.abs().max(1.0),
            "{} vs {}", ed.cost, ef.cost);
    }

    #[test]
    fn profiled_mean_is_a_minimum(
        k1 in dc_params(),
        a in prop::collection::vec(-1.5..1.5f64, 1..=2),
        sigma2 in 0.01..1.0f64,
        delta in prop::sample::select(vec![-0.1, -1e-3, 1e-3, 0.1]),
    ) {
        let n = 5;
        let data = separable_data(80, n, 0.01, 0.9);
        let cfg = FitConfig::new(KernelVariant::preset("dc-ob").unwrap(), a.len(), n);
        let problem = EbProblem::new(&data, &cfg).unwrap();
        let mut h = KernelHyper {
            a,
            h0: 0.0,
            k1,
            k2: Kappa2::Dc(k1),
            zeta: cfg.variant.zeta,
            structure: cfg.variant.structure,
            sigma2,
            memory: n,
        };
        let best = problem.evaluate(&h).unwrap();
        h.h0 = best.h0 + delta;
        let moved = problem.evaluate_fixed_mean(&h).unwrap();
        prop_assert!(moved.cost >= best.cost - 1e-9 * best.cost.abs().max(1.0));
    }
}

#[test]
fn best_cost_does_not_increase_with_restarts() {
    let data = separable_data(120, 5, 0.0, 1.1);
    let mut costs = Vec::new();
    for restarts in 1..=4 {
        let mut cfg = FitConfig::new(KernelVariant::preset("dc-bd").unwrap(), 2, 5);
        cfg.optimizer.restarts = restarts;
        cfg.optimizer.max_iters = 300;
        cfg.optimizer.seed = 17;
        costs.push(volterra_core::fit(&data, &cfg).unwrap().cost);
    }
    for w in costs.windows(2) {
        assert!(w[1] <= w[0], "{costs:?}");
    }
}

#[test]
fn identical_seeds_give_identical_banks() {
    for kind in [BankKind::D1like, BankKind::D3like, BankKind::D4like] {
        let mut spec = BankSpec::new(kind, 3, 99);
        spec.n_train = 80;
        let a = build_databank(&spec).unwrap();
        let b = build_databank(&spec).unwrap();
        assert_eq!(a, b);
        let bits = |d: &[volterra_core::Dataset]| -> Vec<u64> {
            d.iter()
                .flat_map(|x| x.y_noisy.iter().map(|v| v.to_bits()))
                .collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn fast_prediction_matches_dense() {
    let n = 6;
    let len = 150;
    let data = separable_data(len + 30, n, 0.01, 0.8);
    let u_all = data.u.clone();
    let train = TrainingData::new(data.u[..len].to_vec(), data.y[..len].to_vec())
        .with_input(data.input.clone().unwrap());
    let dense = FitConfig::new(KernelVariant::preset("dc-ob-w").unwrap(), 2, n);
    let mut fast = dense.clone();
    fast.path = SolverPath::FastSeparable;
    let h = KernelHyper {
        a: vec![0.9, 0.4],
        h0: 0.0,
        k1: DcParams::unit(0.3, 0.2),
        k2: Kappa2::Delta,
        zeta: dense.variant.zeta,
        structure: dense.variant.structure,
        sigma2: 0.02,
        memory: n,
    };
    let md = volterra_core::FittedModel::from_hyper(&train, &dense, h.clone()).unwrap();
    let mf = volterra_core::FittedModel::from_hyper(&train, &fast, h).unwrap();
    let pd = volterra_core::predict(&md, &u_all, len, 30).unwrap();
    let pf = volterra_core::predict(&mf, &u_all, len, 30).unwrap();
    let scale = pd.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = DVector::from_vec(pd.clone()) - DVector::from_vec(pf);
    assert!(diff.amax() <= 1e-6 * scale, "{}", diff.amax());
}
