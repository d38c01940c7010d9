use newtonspec::assembly::{assemble_mass, assemble_stiffness, default_quadrature_order};
use newtonspec::eigensolve::{rayleigh_quotient, smallest_eigenpairs, EigenOptions};
use newtonspec::immersion::{sample_geometry, SurfacePoint, SurfaceSpec};
use newtonspec::mesh::generate;
use newtonspec::newton::{identity_defects, newton_tensor};
use newtonspec::verify::{check_lemma, delta_star, integrate, LEMMA_TOL};
use newtonspec::{Mesh, Surface};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn surface() -> impl Strategy<Value = (Surface, usize)> {
    prop_oneof![
        (0.5f64..2.0).prop_map(|r| (SurfaceSpec::sphere(2, r).unwrap(), 0)),
        (0.7f64..1.5, 0.7f64..1.5, 0.7f64..1.5)
            .prop_map(|(a, b, c)| (SurfaceSpec::ellipsoid(&[a, b, c]).unwrap(), 0)),
        (0.8f64..1.3, 0.8f64..1.3, 0.8f64..1.3, 0.8f64..1.3)
            .prop_map(|(a, b, c, d)| (SurfaceSpec::ellipsoid(&[a, b, c, d]).unwrap(), 2)),
        (0.5f64..2.0, 0.5f64..2.0).prop_map(|(a, b)| (SurfaceSpec::flat_torus(a, b).unwrap(), 0)),
        (0.2f64..1.4).prop_map(|t| (SurfaceSpec::clifford_torus(t.cos(), t.sin()).unwrap(), 0)),
    ]
}

fn coarse_mesh(spec: &Surface) -> Mesh {
    let level = if spec.dim() == 3 { 1 } else { 2 };
    generate(spec, level).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn meshes_are_closed_and_on_the_surface((spec, _) in surface(), level in 0usize..=2) {
        let mesh = generate(&spec, level).unwrap();
        prop_assert!(mesh.is_closed());
        prop_assert!(mesh.is_consistently_oriented());
        prop_assert!(mesh.max_surface_residual().unwrap() < 1e-12);
        prop_assert!(mesh.total_measure().unwrap() > 0.0);
    }

    #[test]
    fn stiffness_kills_constants_and_is_psd((spec, r) in surface(), seed in any::<u64>()) {
        let mesh = coarse_mesh(&spec);
        let k = assemble_stiffness(&mesh, r, default_quadrature_order(r)).unwrap();
        let scale = k.max_abs();
        prop_assert!(k.row_sums().iter().all(|s| s.abs() <= 1e-12 * scale));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..k.dim()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        prop_assert!(k.bilinear(&x, &x) >= -1e-12 * scale * k.dim() as f64);
    }

    #[test]
    fn mass_totals_match_measure((spec, _) in surface(), lumped in any::<bool>()) {
        let mesh = coarse_mesh(&spec);
        let m = assemble_mass(&mesh, lumped).unwrap();
        let total: f64 = m.row_sums().iter().sum();
        let measure = mesh.total_measure().unwrap();
        prop_assert!((total - measure).abs() <= 1e-12 * measure);
    }

    #[test]
    fn rayleigh_quotients_bound_lambda1((spec, r) in surface(), seed in any::<u64>()) {
        let mesh = coarse_mesh(&spec);
        let k = assemble_stiffness(&mesh, r, default_quadrature_order(r)).unwrap();
        let m = assemble_mass(&mesh, true).unwrap();
        let spectrum = smallest_eigenpairs(&k, &m, &EigenOptions::with_k(1)).unwrap();
        let lambda1 = spectrum.eigenvalues[0];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x: Vec<f64> = (0..k.dim()).map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0)).collect();
        let md = m.diagonal();
        let mean = x.iter().zip(&md).map(|(a, b)| a * b).sum::<f64>() / md.iter().sum::<f64>();
        x.iter_mut().for_each(|v| *v -= mean);
        prop_assert!(rayleigh_quotient(&k, &m, &x).unwrap() >= lambda1 * (1.0 - 1e-10));
    }

    #[test]
    fn lemma_holds_for_random_trials((spec, r) in surface(), seed in any::<u64>()) {
        let mesh = coarse_mesh(&spec);
        let q = default_quadrature_order(r);
        let k_r = assemble_stiffness(&mesh, r, q).unwrap();
        let k_0 = assemble_stiffness(&mesh, 0, q).unwrap();
        let m = assemble_mass(&mesh, true).unwrap();
        let spectrum = smallest_eigenpairs(&k_r, &m, &EigenOptions::with_k(1)).unwrap();
        let (ints, _) = integrate(&mesh, r, q).unwrap();
        let check = check_lemma(
            &mesh,
            &k_r,
            &k_0,
            &m,
            spectrum.eigenvalues[0],
            &spectrum.eigenvectors[0],
            delta_star(spec.dim(), r, &ints),
            10,
            seed,
        )
        .unwrap();
        prop_assert!(check.worst_rayleigh_violation <= LEMMA_TOL);
        prop_assert!(check.worst_delta_violation <= LEMMA_TOL);
        prop_assert!(check.pass);
    }

    #[test]
    fn identities_hold_on_catalog_points((spec, r) in surface(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = spec.random_point(&mut rng).unwrap();
        let sample = sample_geometry(&spec, SurfacePoint::Ambient(&p)).unwrap();
        let nd = newton_tensor(&sample, r).unwrap();
        let d = identity_defects(&sample, &nd).unwrap();
        prop_assert!(d.trace <= 1e-10);
        prop_assert!(d.contraction <= 1e-10);
        prop_assert!(nd.ellipticity_margin > 0.0);
    }
}
