use std::f64::consts::PI;
use std::sync::Arc;

use gaussmink::bodies::{ball, ellipse, perturbed_ball};
use gaussmink::flow::{read_records_csv, run, write_records_csv, FlowConfig, FlowMode, FlowStatus};
use gaussmink::gauss::{gaussian_volume, lp_surface_density};
use gaussmink::geometry::{derive_geometry, support_to_radial, wulff_support};
use gaussmink::logmink::{
    facet_gaussian_cone_measure, slab_gaussian_volume, solve_log_minkowski, Atom, DiscreteMeasure, SolveOptions,
    SymmetricSlabBody,
};
use gaussmink::sphere::{ScalarField, SphericalGrid};
use proptest::prelude::*;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() }
}

fn circle(n: usize) -> Arc<SphericalGrid> {
    SphericalGrid::circle(n).unwrap()
}

// A rotated ellipse plus one even cosine mode, kept uniformly convex.
fn body(g: &Arc<SphericalGrid>, a: f64, b: f64, rot: f64, eps: f64, k: u32) -> ScalarField {
    let min_radius = b * b / a;
    let eps = eps * 0.5 * min_radius / ((k * k - 1) as f64);
    ScalarField::from_fn(g, |x| {
        let t = x[1].atan2(x[0]) - rot;
        (a * a * t.cos().powi(2) + b * b * t.sin().powi(2)).sqrt() + eps * (k as f64 * t).cos()
    })
}

fn body_params() -> impl Strategy<Value = (f64, f64, f64, f64, u32)> {
    (0.7..1.6f64, 0.6..1.0f64, 0.0..PI, -1.0..1.0f64, prop::sample::select(vec![2u32, 4, 6]))
        .prop_map(|(a, frac, rot, eps, k)| (a, a * frac, rot, eps, k))
}

proptest! {
    #![proptest_config(config(48))]

    #[test]
    fn derivatives_annihilate_constants(c in -5.0..5.0f64, n_lat in 8usize..14) {
        for g in [circle(4 * n_lat), SphericalGrid::latlon(n_lat, 2 * n_lat).unwrap()] {
            let f = ScalarField::constant(&g, c);
            for d in f.grad() {
                prop_assert!(d[0].abs() <= 1e-12 * c.abs().max(1.0) && d[1].abs() <= 1e-12 * c.abs().max(1.0));
            }
            for s in f.covariant_hessian() {
                prop_assert!(s.det(2).abs() <= 1e-20 && s.eigenvalues(2).0.abs() <= 1e-11 * c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn first_harmonics_integrate_to_zero(v in prop::array::uniform3(-2.0..2.0f64), n_lat in 8usize..18) {
        let g = SphericalGrid::latlon(n_lat, 2 * n_lat).unwrap();
        let f = ScalarField::from_fn(&g, |x| v[0] * x[0] + v[1] * x[1] + v[2] * x[2]);
        prop_assert!(f.integrate().abs() <= 1e-13);
        let g = circle(4 * n_lat);
        let f = ScalarField::from_fn(&g, |x| v[0] * x[0] + v[1] * x[1]);
        prop_assert!(f.integrate().abs() <= 1e-13);
    }

    #[test]
    fn curvature_and_radial_bounds((a, b, rot, eps, k) in body_params()) {
        let g = circle(256);
        let h = body(&g, a, b, rot, eps, k);
        let geo = derive_geometry(&h).unwrap();
        for (kk, d) in geo.gauss_k().values().iter().zip(geo.det_b()) {
            prop_assert!((kk * d - 1.0).abs() <= 1e-14);
        }
        let rad = support_to_radial(&geo).unwrap();
        prop_assert!(rad.r().min() >= h.min() - 1e-4 * h.max());
        prop_assert!(rad.r().max() <= h.max() + 1e-4 * h.max());
        prop_assert!(rad.r().values().iter().all(|r| *r > 0.0));
        prop_assert!(rad.v_factor().values().iter().all(|v| *v >= 1.0));
    }

    #[test]
    fn measures_are_admissible((a, b, rot, eps, k) in body_params(), p in -1.0..4.0f64) {
        let g = circle(256);
        let geo = derive_geometry(&body(&g, a, b, rot, eps, k)).unwrap();
        let gamma = gaussian_volume(&geo);
        prop_assert!(gamma > 0.0 && gamma < 1.0);
        let m = lp_surface_density(&geo, p).unwrap();
        prop_assert!(m.density.values().iter().all(|d| *d >= 0.0));
        // Gaussian surface area is at most 4·2^{1/4} for convex sets in the plane
        let area = lp_surface_density(&geo, 1.0).unwrap().total_mass();
        prop_assert!(area < 4.0 * 2f64.powf(0.25));
    }

    #[test]
    fn field_csv_round_trips(vals in prop::collection::vec(-1e6..1e6f64, 128)) {
        for g in [circle(128), SphericalGrid::latlon(8, 16).unwrap()] {
            let f = ScalarField::new(g.clone(), vals.clone()).unwrap();
            let mut buf = Vec::new();
            f.write_csv(&mut buf).unwrap();
            let back = ScalarField::read_csv(&g, buf.as_slice()).unwrap();
            prop_assert_eq!(back.values(), f.values());
        }
    }

    #[test]
    fn symmetrize_makes_fields_even(vals in prop::collection::vec(0.5..2.0f64, 64)) {
        let mut f = ScalarField::new(circle(64), vals).unwrap();
        f.symmetrize();
        prop_assert_eq!(f.evenness_defect(), 0.0);
    }

    #[test]
    fn wulff_support_is_idempotent(vals in prop::collection::vec(0.8..1.2f64, 24)) {
        let z = ScalarField::new(circle(24), vals).unwrap();
        let once = wulff_support(&z).unwrap();
        let twice = wulff_support(&once).unwrap();
        prop_assert!(once.sup_distance(&twice).unwrap() <= 1e-12);
        prop_assert!(once.values().iter().zip(z.values()).all(|(w, z)| *w <= z + 1e-12));
    }
}

fn pair_directions(angles: &[f64]) -> Vec<[f64; 3]> {
    angles.iter().map(|t| [t.cos(), t.sin(), 0.0]).collect()
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn slab_volume_derivative_matches_cone_measure(
        h in prop::collection::vec(0.6..1.4f64, 4),
        jitter in prop::collection::vec(-0.2..0.2f64, 4),
    ) {
        let angles: Vec<f64> = (0..4).map(|i| i as f64 * PI / 4.0 + jitter[i]).collect();
        let dirs = pair_directions(&angles);
        let q = SymmetricSlabBody::new(1, &dirs, &h).unwrap();
        let s = facet_gaussian_cone_measure(&q);
        let step = 1e-5;
        for i in 0..4 {
            let shifted = |sign: f64| {
                let mut hh = h.clone();
                hh[i] *= (sign * step).exp();
                slab_gaussian_volume(&SymmetricSlabBody::new(1, &dirs, &hh).unwrap())
            };
            let fd = (shifted(1.0) - shifted(-1.0)) / (2.0 * step);
            if s[i].active {
                prop_assert!((fd - s[i].value).abs() <= 1e-3 * s[i].value, "{} vs {}", fd, s[i].value);
            } else {
                prop_assert!(fd.abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn solution_is_mass_scale_invariant(
        masses in prop::collection::vec(0.6..1.0f64, 4),
        jitter in prop::collection::vec(-0.15..0.15f64, 4),
        lambda in 0.1..10.0f64,
    ) {
        let angles: Vec<f64> = (0..4).map(|i| i as f64 * PI / 4.0 + jitter[i]).collect();
        let atoms: Vec<Atom> = pair_directions(&angles)
            .into_iter()
            .zip(&masses)
            .map(|(direction, &mass)| Atom { direction, mass })
            .collect();
        let mu = DiscreteMeasure::new(1, atoms).unwrap();
        let opts = SolveOptions::default();
        let a = solve_log_minkowski(&mu, &opts).unwrap();
        let b = solve_log_minkowski(&mu.scaled(lambda).unwrap(), &opts).unwrap();
        for (x, y) in a.body.h().iter().zip(b.body.h()) {
            prop_assert!((x - y).abs() <= 1e-6, "{} vs {}", x, y);
        }
        prop_assert!((b.c / a.c - lambda).abs() <= 1e-6 * lambda);
    }
}

#[test]
fn diagnostics_csv_round_trips() {
    let g = circle(64);
    let mut cfg = FlowConfig::new(2.0, ScalarField::constant(&g, 0.08), FlowMode::Normalized);
    cfg.max_steps = 40;
    cfg.record_every = 3;
    let (_, diag) = run(&ellipse(&g, 1.2, 0.9), &cfg).unwrap();
    let mut buf = Vec::new();
    write_records_csv(&diag.records, &mut buf).unwrap();
    let rows = read_records_csv(buf.as_slice()).unwrap();
    assert_eq!(rows.len(), diag.records.len());
    for (row, rec) in rows.iter().zip(&diag.records) {
        assert_eq!(row.t, rec.t);
        assert_eq!(row.gamma, rec.functionals.gamma);
        assert_eq!(row.psi, rec.functionals.psi);
        assert_eq!(row.min_eig_b, rec.min_eig_b);
    }
    assert!(rows.windows(2).all(|w| w[1].t > w[0].t));
}

#[test]
fn restarting_from_a_final_state_is_still() {
    let g = circle(128);
    let f = ScalarField::constant(&g, 1.0 / (4.0 * PI));
    let cfg = FlowConfig::new(2.0, f, FlowMode::Unnormalized);
    let (first, diag) = run(&perturbed_ball(&g, 1.0, 0.1, 2), &cfg).unwrap();
    assert_eq!(diag.status, FlowStatus::Converged);
    assert!(first.record.residual_stationary <= cfg.tol_stop);
    let (second, diag) = run(&first.h, &cfg).unwrap();
    assert_eq!(diag.status, FlowStatus::Converged);
    let moved = second.h.sup_distance(&first.h).unwrap();
    assert!(moved <= cfg.tol_stop * second.t.max(cfg.dt_max), "{moved} over t = {}", second.t);
}

#[test]
fn balls_are_fixed_by_the_wulff_construction() {
    let g = circle(48);
    let b = ball(&g, 1.3);
    let w = wulff_support(&b).unwrap();
    assert!(w.sup_distance(&b).unwrap() <= 1e-12);
}
