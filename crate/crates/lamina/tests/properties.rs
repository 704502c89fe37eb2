//! Property tests for the measure algebra, the layered-media generators and
//! the 1-D oracle.

use lamina::exact::Exact;
use lamina::measures::{Atom, Measure1D, MeasurePair};
use lamina::media::{Feature, LayeredProfile};
use lamina::oracle::{compare_1d, solve_eps_1d, solve_limit_1d, Norm1D};
use lamina::poly::{PiecewisePoly, Poly};
use proptest::prelude::*;

/// A valid measure on [0, 1]: a few density pieces plus rational atoms.
fn measure_strategy() -> impl Strategy<Value = Measure1D> {
    let densities = prop::collection::vec(0.05f64..4.0, 1..4);
    let atoms = prop::collection::btree_set((1i64..32, 2i64..8), 0..3);
    (densities, atoms).prop_map(|(densities, atom_seeds)| {
        let n = densities.len();
        let breaks: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let mut atoms: Vec<Atom> = atom_seeds
            .into_iter()
            .map(|(p, q)| {
                let loc = Exact::new(p, 32 * q).unwrap();
                Atom {
                    location: loc,
                    mass: 0.25 + (p as f64) / 16.0,
                }
            })
            .collect();
        atoms.sort_by_key(|a| a.location);
        atoms.dedup_by(|a, b| a.location == b.location);
        Measure1D::new(1.0, breaks, densities, atoms).expect("valid by construction")
    })
}

fn poly_strategy() -> impl Strategy<Value = PiecewisePoly> {
    prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 1..4), 1..4).prop_map(|pieces| {
        let n = pieces.len();
        let breaks: Vec<f64> = (0..=n).map(|k| k as f64 / n as f64).collect();
        let polys = pieces.into_iter().map(Poly::new).collect();
        PiecewisePoly::new(breaks, polys).expect("valid by construction")
    })
}

proptest! {
    /// Interval masses are additive when the split point is flagged
    /// closed-right: the atom at the split is counted exactly once.
    #[test]
    fn mass_additivity(mu in measure_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0) {
        let mut pts = [a, b, c];
        pts.sort_by(f64::total_cmp);
        let [lo, mid, hi] = pts;
        let whole = mu.mass_of_interval(lo, hi, true).unwrap();
        let first = mu.mass_of_interval(lo, mid, true).unwrap();
        let second = mu.mass_of_interval(mid, hi, true).unwrap();
        prop_assert!((whole - (first + second)).abs() <= 1e-12 * whole.max(1.0));
    }

    /// Quadrature is linear in the integrand to machine precision.
    #[test]
    fn integrate_is_linear(
        mu in measure_strategy(),
        g in poly_strategy(),
        h in poly_strategy(),
        alpha in -3.0f64..3.0,
        beta in -3.0f64..3.0,
    ) {
        let combo = g.combine(&h, |p, q| p.scale(alpha).add(&q.scale(beta)));
        let left = mu.integrate(&combo).unwrap();
        let right = alpha * mu.integrate(&g).unwrap() + beta * mu.integrate(&h).unwrap();
        prop_assert!((left - right).abs() <= 1e-12 * left.abs().max(1.0));
    }

    /// Common-atom detection is symmetric in the pair.
    #[test]
    fn no_common_atoms_symmetric(nu in measure_strategy(), m in measure_strategy()) {
        let forward = MeasurePair::new(nu.clone(), m.clone()).check_no_common_atoms();
        let backward = MeasurePair::new(m, nu).check_no_common_atoms();
        prop_assert_eq!(forward, backward);
    }

    /// The limit solution always satisfies both Dirichlet conditions, and
    /// its flux is continuous across every atom.
    #[test]
    fn oracle_end_value_vanishes(nu in measure_strategy(), f0 in -2.0f64..2.0, f1 in -2.0f64..2.0) {
        let f = PiecewisePoly::constant_pieces(vec![0.0, 0.5, 1.0], &[f0, f1]).unwrap();
        let sol = solve_limit_1d(&nu, &f).unwrap();
        prop_assert!(sol.eval(0.0).abs() <= 1e-13);
        prop_assert!(sol.end_value().abs() <= 1e-13);
        for (t, _) in sol.jumps() {
            let eps = 1e-9;
            let left = sol.flux(t - eps);
            let right = sol.flux(t + eps);
            prop_assert!((left - right).abs() <= 1e-6);
        }
    }

    /// Every admissible layered profile yields a limit pair satisfying the
    /// compatibility inequalities, and its fine-scale route agrees with the
    /// measure route.
    #[test]
    fn profiles_satisfy_l1nu_and_route_consistency(
        soft_c in 0.5f64..3.0,
        stiff_c in 0.5f64..3.0,
        background in 0.5f64..2.0,
    ) {
        let profile = LayeredProfile::new(
            1.0,
            background,
            vec![
                Feature::soft("1/4".parse().unwrap(), soft_c),
                Feature::stiff("3/4".parse().unwrap(), stiff_c),
            ],
        )
        .unwrap();
        let info = profile.limit_measures().unwrap();
        prop_assert!(info.pair.verify_l1nu_inequalities().pass);
        prop_assert!(info.pair.check_no_common_atoms());

        let f = PiecewisePoly::constant_pieces(vec![0.0, 1.0], &[1.0]).unwrap();
        let field = profile.realize(1e-3).unwrap();
        let direct = solve_eps_1d(&field, &f).unwrap();
        let via_measure = solve_limit_1d(&field.empirical_measures().nu, &f).unwrap();
        let gap = compare_1d(&direct, &via_measure, Norm1D::L1).unwrap();
        prop_assert!(gap <= 1e-12);
    }
}
