use lram_core::banded::BandMatrix;
use lram_core::dense::Mat;
use lram_core::dispersion::{bloch_frequencies, effective_wavenumber};
use lram_core::fem::{assemble, MaterialField, StructuredGrid};
use lram_core::homogenize::{laminate_c11, quasi_static, EffectiveMaterial};
use lram_core::materials::{elastic_tensor, interpolate, viscous_tensor, InterpolationScheme};
use lram_core::modal::EigenSettings;
use lram_core::panel::PanelModel;
use lram_core::Complex64;
use proptest::prelude::*;

fn resonant(rho: f64, c11: f64, eta: f64, q: f64, f0: f64, damp: f64) -> EffectiveMaterial {
    let w0 = 2.0 * std::f64::consts::PI * f0;
    EffectiveMaterial::simple(rho, elastic_tensor(c11 / 2.0, 3.0 * c11 / 8.0), viscous_tensor(eta))
        .with_resonators(vec![[q, 0.0]], vec![w0 * w0], Mat::from_fn(1, 1, |_, _| damp * w0))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn interpolation_stays_between_phases(chi in 0.0..=1.0f64, n in 1.0..4.0f64, lo in 0.1..10.0f64, ratio in 1.0..1e4f64) {
        let s = InterpolationScheme::new(n, lo * ratio, lo).unwrap();
        let (v, dv) = interpolate(chi, &s).unwrap();
        prop_assert!(v >= lo * (1.0 - 1e-12) && v <= lo * ratio * (1.0 + 1e-12));
        prop_assert!(dv >= 0.0);
    }

    #[test]
    fn damped_density_dissipates(q in 0.1..50.0f64, f0 in 50.0..3000.0f64, damp in 1e-4..0.5f64, f in 1.0..6000.0f64) {
        let em = resonant(1000.0, 1e9, 0.0, q, f0, damp);
        let w = 2.0 * std::f64::consts::PI * f;
        let rho = em.effective_density(w).unwrap();
        prop_assert!(rho[0][0].im >= 0.0);
        let k = effective_wavenumber(&em, w).unwrap();
        prop_assert!(k.im >= 0.0);
    }

    #[test]
    fn panel_energy_balance(rho in 100.0..8000.0f64, c11 in 1e7..3e11f64, eta in 0.0..20.0f64, f in 5.0..3000.0f64, q in 0.0..30.0f64) {
        let mut em = resonant(rho, c11, eta, q.max(1e-3), 800.0, if eta > 0.0 { 0.05 } else { 0.0 });
        if eta == 0.0 {
            em.omega_d = Mat::zeros(1, 1);
        }
        let sys = PanelModel::new(em, 1, 0.01).unwrap().prepare().unwrap();
        let (r, t) = sys.solve_rt(2.0 * std::f64::consts::PI * f).unwrap();
        let e = r.norm_sqr() + t.norm_sqr();
        if eta == 0.0 {
            prop_assert!((e - 1.0).abs() < 1e-8, "{}", e);
        } else {
            prop_assert!(e <= 1.0 + 1e-8, "{}", e);
        }
    }

    #[test]
    fn stiffness_annihilates_translations(vals in prop::collection::vec((500.0..9000.0f64, 1e6..1e10f64), 9)) {
        let g = StructuredGrid::new(3, 3, 0.01).unwrap();
        let field = MaterialField::from_fn(&g, |p| {
            let (i, j) = (((p[0] / 0.01) * 3.0) as usize, ((p[1] / 0.01) * 3.0) as usize);
            let (rho, k) = vals[j.min(2) * 3 + i.min(2)];
            (rho, elastic_tensor(k, 0.6 * k), viscous_tensor(0.0))
        });
        let sys = assemble(&g, &field).unwrap();
        for dir in 0..2 {
            let u: Vec<f64> = (0..g.num_dofs()).map(|d| if d % 2 == dir { 1.0 } else { 0.0 }).collect();
            let f = sys.stiffness.mul_vec(&u);
            let scale = sys.stiffness.norm_inf();
            prop_assert!(f.iter().all(|v| v.abs() < 1e-9 * scale));
            // Total mass per direction.
            let mass: f64 = sys.mass.mul_vec(&u).iter().sum();
            prop_assert!((mass - field.mean_density() * g.volume()).abs() < 1e-9 * mass);
        }
    }

    #[test]
    fn stripes_between_reuss_and_voigt(k1 in 1e6..1e10f64, k2 in 1e6..1e10f64, split in 1usize..6) {
        let g = StructuredGrid::new(6, 2, 0.01).unwrap();
        let (c1, c2) = (elastic_tensor(k1, 0.5 * k1), elastic_tensor(k2, 0.3 * k2));
        let field = MaterialField::from_fn(&g, |p| {
            let c = if p[0] < split as f64 * 0.01 / 6.0 { c1 } else { c2 };
            (1000.0, c, viscous_tensor(0.0))
        });
        let (c, _) = quasi_static(&g, &field).unwrap();
        let f = split as f64 / 6.0;
        let reuss = laminate_c11(&[f, 1.0 - f], &[c1, c2]);
        prop_assert!((c[0][0] - reuss).abs() < 1e-8 * reuss);
        prop_assert!(c[0][0] <= f * c1[0][0] + (1.0 - f) * c2[0][0] + 1e-6 * reuss);
    }

    #[test]
    fn banded_solve_has_small_residual(seed in 0u64..1000, n in 4usize..40) {
        let lo = 3.min(n - 1);
        let mut a = BandMatrix::<Complex64>::zeros(n, lo, lo);
        let mut dense = Mat::<Complex64>::zeros(n, n);
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        for i in 0..n {
            for j in i.saturating_sub(lo)..=(i + lo).min(n - 1) {
                let v = Complex64::new(next(), next()) + if i == j { Complex64::new(2.0, 0.0) } else { Complex64::new(0.0, 0.0) };
                a.add(i, j, v);
                dense[(i, j)] = v;
            }
        }
        let b = Mat::from_fn(n, 1, |i, _| Complex64::new(i as f64, 1.0));
        let x = a.solve(&b).unwrap();
        let r = dense.matmul(&x);
        for i in 0..n {
            prop_assert!((r[(i, 0)] - b[(i, 0)]).norm() < 1e-9 * (1.0 + i as f64));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn bloch_spectrum_is_even_in_kappa(frac in 0.05..1.0f64, contrast in 1.0..20.0f64) {
        let g = StructuredGrid::new(4, 4, 0.01).unwrap();
        let field = MaterialField::from_fn(&g, |p| {
            let inner = (p[0] - 0.005).abs() < 0.0025 && (p[1] - 0.005).abs() < 0.0025;
            let s = if inner { contrast } else { 1.0 };
            (1000.0 * s, elastic_tensor(1e9 * s, 5e8 * s), viscous_tensor(0.0))
        });
        let k = frac * std::f64::consts::PI / 0.01;
        let a = bloch_frequencies(&g, &field, k, 4, &EigenSettings::default()).unwrap();
        let b = bloch_frequencies(&g, &field, -k, 4, &EigenSettings::default()).unwrap();
        for (x, y) in a.frequency_hz.iter().zip(&b.frequency_hz) {
            prop_assert!((x - y).abs() < 1e-6 * x);
        }
        prop_assert!(a.parity.iter().all(|p| p.abs() > 0.99));
    }
}
