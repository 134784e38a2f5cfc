mod common;

use proptest::prelude::*;

use common::{random_instance, Target, TARGETS};
use stylemetric::encoder::ClassHead;
use stylemetric::losses::{angular_margin_loss, embedding_reg_loss, normalize_rows, supcon_loss, total_loss};

fn prepared(seed: u64) -> (ndarray::Array2<f64>, common::Instance) {
    let inst = random_instance(seed, 0.0, 0.07);
    let (z, _) = normalize_rows(inst.z_raw.view()).unwrap();
    (z, inst)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn margin_never_lowers_the_loss(seed in 0u64..10_000, m1 in 0.0f64..1.5, dm in 0.0f64..1.0) {
        let (z, inst) = prepared(seed);
        let head = ClassHead::from_weights(inst.head.clone()).unwrap();
        let (w, _) = normalize_rows(inst.head.view()).unwrap();
        let m2 = m1 + dm;
        // cos(theta + m) is decreasing in m only while theta + m <= pi
        let max_angle = inst
            .labels
            .iter()
            .enumerate()
            .map(|(i, &y)| z.row(i).dot(&w.row(y)).clamp(-1.0, 1.0).acos())
            .fold(0.0f64, f64::max);
        prop_assume!(max_angle + m2 <= std::f64::consts::PI);
        let a = angular_margin_loss(z.view(), &inst.labels, &head, m1, 32.0).unwrap().loss;
        let b = angular_margin_loss(z.view(), &inst.labels, &head, m2, 32.0).unwrap().loss;
        prop_assert!(b >= a - 1e-12, "m {m1} -> {m2}: {a} -> {b}");
    }

    #[test]
    fn vanishing_scale_gives_log_classes(seed in 0u64..10_000, m in 0.0f64..3.0) {
        let (z, inst) = prepared(seed);
        let head = ClassHead::from_weights(inst.head.clone()).unwrap();
        let l = angular_margin_loss(z.view(), &inst.labels, &head, m, 1e-9).unwrap().loss;
        let want = (head.num_classes() as f64).ln();
        prop_assert!((l - want).abs() < 1e-8, "{l} vs {want}");
    }

    #[test]
    fn regularization_is_bounded(seed in 0u64..10_000) {
        let (z, inst) = prepared(seed);
        let l = embedding_reg_loss(z.view(), inst.z_ref.view()).unwrap().loss;
        prop_assert!((0.0..=4.0).contains(&l));
        let same = embedding_reg_loss(z.view(), z.view()).unwrap().loss;
        prop_assert_eq!(same, 0.0);
        let opposite = embedding_reg_loss(z.view(), (-&z).view()).unwrap().loss;
        prop_assert!((opposite - 4.0).abs() < 1e-12);
    }

    #[test]
    fn contrastive_is_at_least_log_positives(seed in 0u64..10_000, tau in 0.05f64..2.0) {
        // each anchor's term is -log of a softmax share, so it is >= 0, and the
        // mean over P positives of -log(share) is >= -log(sum of shares / P) >= log P
        let (z, inst) = prepared(seed);
        let l = supcon_loss(z.view(), &inst.labels, tau).unwrap();
        for (i, &v) in l.per_anchor.iter().enumerate() {
            let positives = inst.labels.iter().enumerate().filter(|&(j, &y)| j != i && y == inst.labels[i]).count();
            prop_assert!(v >= (positives as f64).ln() - 1e-12, "anchor {i}: {v} with {positives} positives");
        }
    }

    #[test]
    fn total_is_the_weighted_sum(seed in 0u64..10_000, lambda_scon in 0.0f64..2.0, lambda_reg in 0.0f64..2.0) {
        let (z, inst) = prepared(seed);
        let hp = stylemetric::model::Hyperparams { lambda_scon, lambda_reg, ..inst.hp.clone() };
        let head = ClassHead::from_weights(inst.head.clone()).unwrap();
        let t = total_loss(z.view(), inst.z_ref.view(), &inst.labels, &head, &hp).unwrap();
        let b = t.breakdown;
        prop_assert!((b.total - (b.l_ang + lambda_scon * b.l_scon + lambda_reg * b.l_reg)).abs() < 1e-12);
    }
}

#[test]
fn three_point_check_also_agrees_at_a_safe_step() {
    // the coarser default stencil, on the smooth targets only
    let inst = random_instance(11, 0.5, 1.0);
    for target in TARGETS.into_iter().filter(|t| matches!(t, Target::Contrastive | Target::Regularization)) {
        let params = inst.params(target);
        let check = stylemetric::losses::finite_difference_check(|p| inst.evaluate(target, p), &params, 64, 1e-5, 0)
            .unwrap();
        assert!(check.max_rel_error < 1e-4, "{target:?}: {check:?}");
    }
}
