use ndarray::Array2;
use proptest::prelude::*;

use causalmix::finetune::{binary_auc, from_bytes, log_loss, to_bytes, weight_distance, ReferenceModel};
use causalmix::generators::{build_mix_batches, MixPlan, RowSource, SyntheticSource, GeneratorError};
use causalmix::rng::{seeded, SeededRng};
use causalmix::table::CodeBook;
use causalmix::{Column, ColumnKind, Schema, Table};
use std::sync::Arc;

fn toy(n: usize, offset: f64) -> Table {
    let mut data = Array2::zeros((n, 3));
    for r in 0..n {
        data[[r, 0]] = r as f64 + offset;
        data[[r, 1]] = (r as f64).cos();
        data[[r, 2]] = (r % 2) as f64;
    }
    let cols = vec![
        Column::new("a", ColumnKind::Numeric),
        Column::new("b", ColumnKind::Numeric),
        Column::new("y", ColumnKind::Categorical),
    ];
    Table::new(Schema::new(cols, 2).unwrap(), data, CodeBook::default()).unwrap()
}

struct Fixed(Table);

impl SyntheticSource for Fixed {
    fn name(&self) -> String {
        "fixed".into()
    }
    fn generate(&self, _: &mut SeededRng) -> Result<Table, GeneratorError> {
        Ok(self.0.clone())
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn auc_ignores_monotone_transforms(
        raw in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..60),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        prop_assume!(raw.iter().any(|p| p.1) && raw.iter().any(|p| !p.1));
        // Coarse grid keeps ties in play.
        let scores: Vec<f64> = raw.iter().map(|p| (p.0 * 4.0).round() / 4.0).collect();
        let pos: Vec<bool> = raw.iter().map(|p| p.1).collect();
        let base = binary_auc(&scores, &pos).unwrap();
        let affine: Vec<f64> = scores.iter().map(|s| scale * s + shift).collect();
        let expo: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        prop_assert_eq!(binary_auc(&affine, &pos).unwrap(), base);
        prop_assert_eq!(binary_auc(&expo, &pos).unwrap(), base);
        let flipped: Vec<bool> = pos.iter().map(|p| !p).collect();
        prop_assert!((binary_auc(&scores, &flipped).unwrap() - (1.0 - base)).abs() < 1e-12);
    }

    #[test]
    fn log_loss_is_nonnegative(rows in prop::collection::vec((0.01f64..1.0, 0usize..2), 1..40)) {
        let n = rows.len();
        let probs = Array2::from_shape_fn((n, 2), |(r, c)| if c == 1 { rows[r].0 } else { 1.0 - rows[r].0 });
        let labels: Vec<usize> = rows.iter().map(|r| r.1).collect();
        prop_assert!(log_loss(probs.view(), &labels).unwrap() >= 0.0);
    }

    #[test]
    fn checkpoints_round_trip(d in 1usize..6, k in 2usize..5, seed in any::<u64>()) {
        let m = ReferenceModel::new(d, k, &mut seeded(seed));
        let back = from_bytes(&to_bytes(&m)).unwrap();
        prop_assert_eq!(back.network(), m.network());
        prop_assert_eq!(back.init(), m.init());
    }

    #[test]
    fn distance_squares_add_up(d in 1usize..6, k in 2usize..4, seed in any::<u64>(), eps in 1e-4f64..1.0) {
        let mut m = ReferenceModel::new(d, k, &mut seeded(seed));
        for layer in &mut m.network_mut().layers {
            layer.weights.mapv_inplace(|w| w + eps * w.signum());
            layer.bias.mapv_inplace(|b| b - eps);
        }
        let r = weight_distance(&m);
        let layers: f64 = r.per_layer.iter().map(|l| l.distance.powi(2)).sum();
        let parts = r.per_component.hidden.powi(2) + r.per_component.head.powi(2);
        prop_assert!((r.total.powi(2) - layers).abs() <= 1e-9 * r.total.powi(2));
        prop_assert!((r.total.powi(2) - parts).abs() <= 1e-9 * r.total.powi(2));
    }

    #[test]
    fn batch_composition_follows_alpha(alpha in 0.0f64..=1.0, batch in 2usize..40, seed in any::<u64>()) {
        let plan = MixPlan {
            alpha,
            real: toy(30, 0.0),
            sources: vec![Arc::new(Fixed(toy(25, 1000.0)))],
            refresh_interval: None,
        };
        let (want_real, want_syn) = plan.composition(batch);
        prop_assert_eq!(want_real, (alpha * batch as f64).round() as usize);
        let mut it = build_mix_batches(plan, batch, &mut seeded(seed)).unwrap();
        for _ in 0..3 {
            let b = it.next_batch().unwrap();
            prop_assert_eq!(b.n_real, want_real);
            prop_assert_eq!(b.n_synthetic, want_syn);
            prop_assert_eq!(b.x.nrows(), batch);
            for (r, s) in b.source.iter().enumerate() {
                // Synthetic rows were shifted by 1000 in column `a`.
                prop_assert_eq!(*s == RowSource::Synthetic, b.x[[r, 0]] >= 1000.0);
            }
        }
    }

    #[test]
    fn real_rows_are_covered_each_epoch(alpha in 0.2f64..=1.0, batch in 4usize..20, seed in any::<u64>()) {
        let n = 37;
        let plan = MixPlan {
            alpha,
            real: toy(n, 0.0),
            sources: vec![Arc::new(Fixed(toy(10, 1000.0)))],
            refresh_interval: None,
        };
        let per = plan.composition(batch).0;
        prop_assume!(per > 0);
        let steps = (5 * n).div_ceil(per);
        let mut it = build_mix_batches(plan, batch, &mut seeded(seed)).unwrap();
        let mut seen = vec![false; n];
        for _ in 0..steps {
            for &r in &it.next_batch().unwrap().real_rows {
                seen[r] = true;
            }
        }
        let covered = seen.iter().filter(|&&s| s).count() as f64 / n as f64;
        prop_assert!(covered >= 0.99);
    }
}
