mod common;

use ou_tails::verify::{critical_two_point, delta_paper_rule, lemma3_report, tail_probability, TailMethod};
use ou_tails::{BoundReport, DensityModel, Params};
use proptest::prelude::*;

use common::fast_cdf;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn pass_flag_recomputable(est in -1e3f64..1e3, ci in 0f64..10.0, bound in -1e3f64..1e3) {
        let r = BoundReport::new("p", Params::new("tilt", 1), est, ci, bound);
        prop_assert_eq!(r.margin, bound - est);
        prop_assert_eq!(r.pass, r.margin + r.ci_half_width >= 0.0);
    }

    #[test]
    fn tilt_tail_monotone_and_markov(alpha in 0.05f64..4.0, t in 0f64..2.0, l1 in 0.01f64..10.0, dl in 0.01f64..5.0) {
        let d = DensityModel::tilt(vec![alpha]).unwrap();
        let (r1, r2) = (l1.exp(), (l1 + dl).exp());
        let (p1, _) = tail_probability(&d, t, r1, TailMethod::ExactTilt).unwrap();
        let (p2, _) = tail_probability(&d, t, r2, TailMethod::ExactTilt).unwrap();
        prop_assert!(p2 <= p1);
        prop_assert!(p1 <= 1.0 / r1 * (1.0 + 1e-12));
        // {e^{a G − a²/2} > r} = {G > log r / a + a/2}, with a = α e^{−t}
        let a = alpha * (-t).exp();
        let oracle = 1.0 - fast_cdf(l1 / a + a / 2.0);
        prop_assert!((p1 - oracle).abs() <= 1e-12 + 1e-9 * oracle);
    }

    #[test]
    fn two_point_laws_satisfy_bizarre_inequality(a in -8f64..2.0, p in 0.01f64..0.99) {
        prop_assume!(p * a.exp() < 0.999);
        let law = critical_two_point(a, p).unwrap();
        let b = ((1.0 - p * a.exp()) / (1.0 - p)).ln();
        let below = p * f64::from(u8::from(a <= -2.0)) + (1.0 - p) * f64::from(u8::from(b <= -2.0));
        let mean = p * a + (1.0 - p) * b;
        prop_assert!((law.prob_below - below).abs() < 1e-15);
        prop_assert!(below <= -mean + 1e-12);
        prop_assert!(lemma3_report(&law).unwrap().pass);
    }

    #[test]
    fn default_delta_positive_and_decreasing(l in 0.01f64..50.0, dl in 0.01f64..10.0) {
        let d1 = delta_paper_rule(l.exp());
        let d2 = delta_paper_rule((l + dl).exp());
        prop_assert!(d1 > 0.0 && d2 > 0.0 && d2 < d1);
        prop_assert!((d1 * l - 2.5).abs() < 1e-9);
    }
}
