use super::*;
use crate::geometry::builders::icosphere;
use crate::geometry::point::locate_global;
use proptest::prelude::*;

fn sphere_pair(ctx: &SurfaceContext, deg: f64) -> Vec<SurfacePoint> {
    let t = deg.to_radians();
    vec![
        locate_global(&ctx.g, &V3::new(0.0, 0.0, 1.0)),
        locate_global(&ctx.g, &V3::new(t.sin(), 0.0, t.cos())),
    ]
}

fn separation(s: &EffectiveSample) -> f64 {
    s.a[0].pos().normalize().dot(&s.a[1].pos().normalize()).clamp(-1.0, 1.0).acos()
}

#[test]
fn sphere_pair_separates_like_the_closed_form_ode() {
    let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
    let a = sphere_pair(&ctx, 70.0);
    let cfg = EffectiveConfig { dt: 0.01, t_final: 0.06, renorm: RenormParams { rho_cells: 6.0, eta_cells: 6.0, ..Default::default() }, ..Default::default() };
    let tr = run_effective(&ctx, &a, &[1, 1], &FluxSpec::default(), &cfg).unwrap();
    assert_eq!(tr.termination, Termination::Completed);
    let s0 = &tr.samples[0];
    let last = tr.samples.last().unwrap();
    // φ' = 2 cot(φ/2)
    let mut phi = separation(s0);
    let n = 60000;
    let h = last.t / n as f64;
    for _ in 0..n {
        phi += h * 2.0 / (phi / 2.0).tan();
    }
    let got = separation(last);
    let moved = phi - separation(s0);
    assert!((got - phi).abs() < 0.1 * moved, "{} vs {}", got.to_degrees(), phi.to_degrees());
    assert!(tr.samples.windows(2).all(|w| w[1].w <= w[0].w + cfg.energy_tol));
    assert!(tr.ledger.imbalance < 0.1, "{:?}", tr.ledger);
}

#[test]
fn antipodal_pair_stays_put() {
    let ctx = SurfaceContext::new(icosphere(4, 1.0).unwrap()).unwrap();
    let a = sphere_pair(&ctx, 180.0);
    let cfg = EffectiveConfig { dt: 0.01, t_final: 0.05, ..Default::default() };
    let tr = run_effective(&ctx, &a, &[1, 1], &FluxSpec::default(), &cfg).unwrap();
    for s in &tr.samples {
        for (p, q) in s.a.iter().zip(&a) {
            assert!((p.pos() - q.pos()).norm() < ctx.cell());
        }
    }
}

#[test]
fn hungarian_on_a_known_matrix() {
    let c = vec![vec![4.0, 1.0, 3.0], vec![2.0, 0.0, 5.0], vec![3.0, 2.0, 2.0]];
    let m = hungarian(&c);
    let total: f64 = m.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
    assert_eq!(total, 5.0);
    assert!(hungarian(&[]).is_empty());
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..n {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn hungarian_is_optimal(n in 1usize..6, seed in proptest::collection::vec(0.0f64..10.0, 36)) {
        let c: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| seed[i * 6 + j]).collect()).collect();
        let m = hungarian(&c);
        let mut cols = m.clone();
        cols.sort();
        prop_assert_eq!(cols, (0..n).collect::<Vec<_>>());
        let got: f64 = m.iter().enumerate().map(|(i, &j)| c[i][j]).sum();
        let best = permutations(n).iter().map(|p| p.iter().enumerate().map(|(i, &j)| c[i][j]).sum::<f64>()).fold(f64::INFINITY, f64::min);
        prop_assert!((got - best).abs() < 1e-9);
    }
}

#[test]
fn bad_configs_are_rejected() {
    assert!(EffectiveConfig { dt: 0.0, ..Default::default() }.validate().is_err());
    let ctx = SurfaceContext::new(icosphere(3, 1.0).unwrap()).unwrap();
    let a = sphere_pair(&ctx, 5.0);
    assert!(run_effective(&ctx, &a, &[1, 1], &FluxSpec::default(), &EffectiveConfig::default()).is_err());
}
