//! Property tests of structural invariants on random instances.

use bandgap_qed::effective::{kappa, overlap, overlap_with_vector};
use bandgap_qed::ensemble::SampleStatistics;
use bandgap_qed::hamiltonian::{bandgap_spectrum, build_nonhermitian, lindblad_decomposition, max_resonance};
use bandgap_qed::io::fmt_sig;
use bandgap_qed::master::MasterSolver;
use bandgap_qed::weak_drive::linear_response;
use bandgap_qed::{sample_configuration, ModelParams, Range};
use proptest::prelude::*;

fn range() -> impl Strategy<Value = Range> {
    prop_oneof![(0.5f64..500.0).prop_map(Range::Finite), Just(Range::Infinite)]
}

fn params() -> impl Strategy<Value = ModelParams> {
    (0.0f64..8.0, range(), 0.0f64..2.0, 0.0f64..3.0, 0.0f64..3.2, -4.0f64..8.0).prop_map(|(v, range, gp, g1, ka, delta)| {
        ModelParams { v, range, gamma_prime: gp, gamma_1d: g1, ka_d: ka, kl_d: ka, delta, ..ModelParams::default() }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn lossless_waveguide_conserves_flux(p in params(), n in 1usize..9, seed in 0u64..1000) {
        let p = ModelParams { gamma_prime: 0.0, gamma_1d: p.gamma_1d.max(0.05), ..p };
        let c = sample_configuration(30, n, seed).unwrap();
        match linear_response(&c, &p) {
            Ok((t, r)) => prop_assert!((t + r - 1.0).abs() < 1e-9, "T + R = {}", t + r),
            Err(bandgap_qed::Error::SingularSystem { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        }
    }

    #[test]
    fn lossy_response_is_passive(p in params(), n in 1usize..9, seed in 0u64..1000) {
        let p = ModelParams { gamma_prime: p.gamma_prime.max(0.05), ..p };
        let c = sample_configuration(30, n, seed).unwrap();
        let (t, r) = linear_response(&c, &p).unwrap();
        prop_assert!(t >= 0.0 && r >= 0.0 && t + r <= 1.0 + 1e-12);
    }

    #[test]
    fn overlaps_are_bounded(n in 1usize..30, seed in 0u64..10_000, kl in 0.0f64..3.2, l in range()) {
        let c = sample_configuration(200, n, seed).unwrap();
        prop_assert!(overlap(&c, kl).norm() <= 1.0 + 1e-12);
        let r = max_resonance(&c, 3.0, l).unwrap();
        prop_assert!(overlap_with_vector(&c, kl, &r.vector).norm() <= 1.0 + 1e-12);
    }

    #[test]
    fn kappa_lies_in_unit_interval(n in 1usize..200, extra in 0u32..400) {
        let k = kappa(n, n as u32 + extra);
        prop_assert!((0.0..=1.0).contains(&k));
    }

    #[test]
    fn infinite_range_spectrum_has_rank_one(n in 1usize..21, seed in 0u64..10_000, v in 0.1f64..20.0) {
        let c = sample_configuration(200, n, seed).unwrap();
        let s = bandgap_spectrum(&c, v, Range::Infinite);
        let top = n as f64 * v;
        prop_assert!((s.energies[0] - top).abs() <= 1e-10 * top);
        for e in &s.energies[1..] {
            prop_assert!(e.abs() <= 1e-10 * top);
        }
    }

    #[test]
    fn lindblad_terms_reconstruct_the_hamiltonian(p in params(), n in 1usize..6, m in 1usize..4, seed in 0u64..1000) {
        let m = m.min(n);
        let p = ModelParams { omega: 0.7, ..p };
        let c = sample_configuration(25, n, seed).unwrap();
        let direct = build_nonhermitian(&c, &p, m).unwrap().to_dense();
        let rebuilt = lindblad_decomposition(&c, &p, m).unwrap().reconstruct_nonhermitian();
        prop_assert!((direct - rebuilt).camax() < 1e-12);
    }

    #[test]
    fn density_matrix_stays_physical(p in params(), n in 1usize..5, seed in 0u64..1000, omega in 0.1f64..4.0, t in 0.1f64..3.0) {
        let c = sample_configuration(25, n, seed).unwrap();
        let mut solver = MasterSolver::new(&c, &p.with_omega(omega), n).unwrap();
        solver.advance_to(t).unwrap();
        let rho = solver.density();
        prop_assert!((rho.trace().re - 1.0).abs() < 1e-9 && rho.trace().im.abs() < 1e-9);
        prop_assert!(rho.hermiticity_error() < 1e-10);
        prop_assert!(rho.min_diagonal() > -1e-10);
        prop_assert!(rho.check().is_ok());
    }

    #[test]
    fn welford_statistics_are_consistent(xs in prop::collection::vec(-1e3f64..1e3, 1..200)) {
        let s = SampleStatistics::from_values(&xs);
        let lo = xs.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(s.mean >= lo - 1e-9 && s.mean <= hi + 1e-9);
        prop_assert!(s.std >= 0.0 && s.std <= (hi - lo) + 1e-9);
        prop_assert_eq!(s.count, xs.len());
    }

    #[test]
    fn twelve_digit_format_round_trips(x in prop::num::f64::NORMAL) {
        let y: f64 = fmt_sig(x).parse().unwrap();
        prop_assert!((y - x).abs() <= 5e-12 * x.abs());
    }
}
