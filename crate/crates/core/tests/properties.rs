use nalgebra::DMatrix;
use num_complex::Complex64;
use platonet::analytic::final_value;
use platonet::design::{solve_j, JGrid, VALUE_TOLERANCE};
use platonet::dynamics::{self, derivative, ExcitationState, IntegrateOptions, Network, NetworkSpec, NoiseRates};
use platonet::geometry::{build_solid, coupling_matrix, CouplingMode, SolidKind};
use platonet::reduced::{reduced_derivative, ReducedSpec, ReducedState};
use platonet::symmetry::{aggregate, quotient_of};
use proptest::prelude::*;

fn hermitian(n: usize) -> impl Strategy<Value = DMatrix<Complex64>> {
    prop::collection::vec(-1.0f64..1.0, 2 * n * n).prop_map(move |v| {
        let a = DMatrix::from_fn(n, n, |i, j| Complex64::new(v[2 * (i * n + j)], v[2 * (i * n + j) + 1]));
        (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
    })
}

fn rates() -> impl Strategy<Value = NoiseRates> {
    (0.0f64..3.0, 0.0f64..3.0, 0.05f64..3.0).prop_map(|(g, d, k)| NoiseRates {
        gamma: g,
        gamma_diss: d,
        gamma_sink: k,
    })
}

fn state(rho: DMatrix<Complex64>, env: f64, target: f64) -> ExcitationState {
    ExcitationState {
        t: 0.0,
        rho,
        rho_env: env,
        rho_target: target,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn derivative_is_linear(
        r1 in hermitian(8),
        r2 in hermitian(8),
        a in -2.0f64..2.0,
        b in -2.0f64..2.0,
        rates in rates(),
    ) {
        let spec = NetworkSpec::standard(SolidKind::Cube, CouplingMode::AllPairs, 1.0, rates);
        let net = spec.network().unwrap();
        let (ca, cb) = (Complex64::new(a, 0.0), Complex64::new(b, 0.0));
        let mixed = state(&r1 * ca + &r2 * cb, 0.0, 0.0);
        let d = derivative(&mixed, &net).unwrap();
        let d1 = derivative(&state(r1, 0.0, 0.0), &net).unwrap();
        let d2 = derivative(&state(r2, 0.0, 0.0), &net).unwrap();
        let want = &d1.rho * ca + &d2.rho * cb;
        prop_assert!((&d.rho - want).iter().all(|z| z.norm() < 1e-12));
        prop_assert!((d.rho_env - (a * d1.rho_env + b * d2.rho_env)).abs() < 1e-12);
        prop_assert!((d.rho_target - (a * d1.rho_target + b * d2.rho_target)).abs() < 1e-12);
    }

    #[test]
    fn derivative_keeps_hermiticity_and_total(rho in hermitian(6), rates in rates()) {
        let spec = NetworkSpec::standard(SolidKind::Octahedron, CouplingMode::AllPairs, 1.0, rates);
        let d = derivative(&state(rho, 0.0, 0.0), &spec.network().unwrap()).unwrap();
        prop_assert!((&d.rho - d.rho.adjoint()).iter().all(|z| z.norm() < 1e-12));
        let dtrace: f64 = (0..6).map(|i| d.rho[(i, i)].re).sum();
        prop_assert!((dtrace + d.rho_env + d.rho_target).abs() < 1e-12);
    }

    #[test]
    fn aggregate_is_linear_and_adjoint_compatible(
        r1 in hermitian(8),
        r2 in hermitian(8),
        a in -2.0f64..2.0,
    ) {
        let c = coupling_matrix(&build_solid(SolidKind::Cube), CouplingMode::NearestNeighbor, 1.0);
        let map = quotient_of(&c, 7, &[0.0; 8]).unwrap();
        let ca = Complex64::new(a, 0.0);
        let lhs = aggregate(&(&r1 * ca + &r2), &map).unwrap();
        let rhs = aggregate(&r1, &map).unwrap() * ca + aggregate(&r2, &map).unwrap();
        prop_assert!((&lhs - &rhs).iter().all(|z| z.norm() < 1e-12));
        // Diagonal blocks also collect the coherences inside each block.
        let agg = aggregate(&r1, &map).unwrap();
        let inner: Complex64 = map
            .groups
            .iter()
            .flat_map(|g| g.iter().flat_map(move |&p| g.iter().map(move |&q| (p, q))))
            .filter(|(p, q)| p != q)
            .map(|(p, q)| r1[(p, q)])
            .sum();
        prop_assert!((agg.trace() - r1.trace() - inner).norm() < 1e-12);
        let diag = DMatrix::from_diagonal(&r1.diagonal());
        prop_assert!((aggregate(&diag, &map).unwrap().trace() - r1.trace()).norm() < 1e-12);
        let skew = &r1 * Complex64::new(0.0, 1.0) + &r2;
        let adj = aggregate(&skew.adjoint(), &map).unwrap();
        prop_assert!((adj - aggregate(&skew, &map).unwrap().adjoint()).iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn quotient_follows_relabelling(
        kind in prop::sample::select(vec![SolidKind::Tetrahedron, SolidKind::Cube, SolidKind::Icosahedron]),
        mode in prop::sample::select(vec![CouplingMode::AllPairs, CouplingMode::NearestNeighbor]),
        seed in any::<u64>(),
    ) {
        let solid = build_solid(kind);
        let n = solid.n();
        let perm = {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            p
        };
        let c = coupling_matrix(&solid, mode, 1.0);
        let mut init = vec![0.0; n];
        init[0] = 1.0;
        let base = quotient_of(&c, n - 1, &init).unwrap();
        let mut pinit = vec![0.0; n];
        pinit[perm[0]] = 1.0;
        let moved = quotient_of(&c.permuted(&perm), perm[n - 1], &pinit).unwrap();
        let mut expected: Vec<Vec<usize>> = base
            .groups
            .iter()
            .map(|g| {
                let mut h: Vec<usize> = g.iter().map(|&p| perm[p]).collect();
                h.sort();
                h
            })
            .collect();
        let sink_group = expected[base.sink_block].clone();
        expected.sort();
        let mut got = moved.groups.clone();
        got.sort();
        prop_assert_eq!(got, expected);
        prop_assert_eq!(&moved.groups[moved.sink_block], &sink_group);
        prop_assert!((moved.effective_j - base.effective_j).abs() < 1e-12 * base.effective_j);
    }

    #[test]
    fn final_value_is_a_probability(
        j in 1e-3f64..1e3,
        nc in 2usize..8,
        g in 0.0f64..20.0,
        d in 1e-4f64..20.0,
        k in 1e-2f64..20.0,
    ) {
        let v = final_value(&ReducedSpec::new(j, nc, NoiseRates { gamma: g, gamma_diss: d, gamma_sink: k })).unwrap();
        prop_assert!((0.0..=1.0 + 1e-9).contains(&v), "{}", v);
    }

    #[test]
    fn reduced_derivative_is_affine(
        a in prop::array::uniform6(-1.0f64..1.0),
        b in prop::array::uniform6(-1.0f64..1.0),
        t in -2.0f64..2.0,
        j in 0.0f64..3.0,
        rates in rates(),
    ) {
        // f(s) − f(0) is linear in s.
        let spec = ReducedSpec::new(j, 5, rates);
        let f = |x: [f64; 6]| reduced_derivative(&ReducedState::from_array(x), &spec).to_array();
        let zero = f([0.0; 6]);
        let mix: [f64; 6] = std::array::from_fn(|i| t * a[i] + b[i]);
        let (fm, fa, fb) = (f(mix), f(a), f(b));
        for i in 0..6 {
            let lin = t * (fa[i] - zero[i]) + (fb[i] - zero[i]);
            prop_assert!(((fm[i] - zero[i]) - lin).abs() < 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, ..ProptestConfig::default() })]

    #[test]
    fn trajectories_respect_physical_invariants(rates in rates(), kind in prop::sample::select(vec![SolidKind::Tetrahedron, SolidKind::Octahedron, SolidKind::Cube])) {
        let spec = NetworkSpec::standard(kind, CouplingMode::AllPairs, 1.0, rates);
        let traj = dynamics::integrate(&spec.network().unwrap(), 5.0, &IntegrateOptions::with_stride(0.1)).unwrap();
        prop_assert!(traj.max_trace_error() < 1e-9);
        for w in traj.samples.windows(2) {
            prop_assert!(w[1].rho_env >= w[0].rho_env - 1e-14);
            prop_assert!(w[1].rho_target >= w[0].rho_target - 1e-14);
        }
        for s in &traj.samples {
            prop_assert!((&s.rho - s.rho.adjoint()).iter().all(|z| z.norm() == 0.0));
            prop_assert!(s.populations().iter().all(|&p| p >= -1e-12));
        }
    }

    #[test]
    fn design_round_trip(
        j0 in 1e-2f64..1e2,
        nc in prop::sample::select(vec![4usize, 5, 6]),
        g in 0.1f64..10.0,
        d in 0.01f64..10.0,
        k in 0.1f64..10.0,
    ) {
        let rates = NoiseRates { gamma: g, gamma_diss: d, gamma_sink: k };
        let target = final_value(&ReducedSpec::new(j0, nc, rates)).unwrap();
        let p = solve_j(&rates, nc, target, &JGrid::default()).unwrap();
        prop_assert!(p.attainable);
        for &j in &p.roots {
            prop_assert!((1e-3..=1e6).contains(&j));
            let v = final_value(&ReducedSpec::new(j, nc, rates)).unwrap();
            prop_assert!((v - target).abs() < VALUE_TOLERANCE);
        }
    }
}

#[test]
fn noiseless_evolution_is_unitary_without_sink() {
    // A vanishing sink rate leaves the closed coherent evolution.
    let spec = NetworkSpec::standard(
        SolidKind::Cube,
        CouplingMode::AllPairs,
        1.0,
        NoiseRates::noiseless(1e-14),
    );
    let mut rho = DMatrix::zeros(8, 8);
    let v: Vec<f64> = (0..8).map(|i| (i as f64 + 1.0).sqrt()).collect();
    let norm: f64 = v.iter().map(|x| x * x).sum();
    for i in 0..8 {
        for j in 0..8 {
            rho[(i, j)] = Complex64::new(v[i] * v[j] / norm, 0.0);
        }
    }
    let net = Network::new(spec.coupling.clone(), 7, spec.rates, rho).unwrap();
    let traj = dynamics::integrate(&net, 20.0, &IntegrateOptions::with_stride(0.5)).unwrap();
    for s in &traj.samples {
        assert!((s.purity() - 1.0).abs() < 1e-9, "{}", s.purity());
    }
}
