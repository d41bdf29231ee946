use std::collections::BTreeSet;

use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;

use causalmix::discovery::ProbAdjacency;
use causalmix::generators::{
    discretize, generate_table_augment, ArmKind, GeneratorArm, ScmArmConfig, TableAugmentConfig,
};
use causalmix::generators::build_source;
use causalmix::rng::seeded;
use causalmix::scm::{fit_scm, sample_dag, sample_scm, QualityTier};
use causalmix::table::CodeBook;
use causalmix::{Column, ColumnKind, Schema, Table};

fn random_c(d: usize, seed: u64) -> ProbAdjacency {
    let mut rng = seeded(seed);
    let m = Array2::from_shape_fn((d, d), |(i, j)| if i == j { 0.0 } else { rng.random::<f64>() });
    ProbAdjacency::from_matrix(m).unwrap()
}

/// Numeric `a`, `b`; categorical `c` with 3 codes; target `y` with 2.
fn mixed_table(n: usize, seed: u64) -> Table {
    let mut rng = seeded(seed);
    let mut data = Array2::zeros((n, 4));
    for r in 0..n {
        let a: f64 = rng.random_range(-2.0..2.0);
        data[[r, 0]] = a;
        data[[r, 1]] = 1.5 * a + rng.random_range(-0.3..0.3);
        data[[r, 2]] = (r % 3) as f64;
        data[[r, 3]] = f64::from(u8::from(a + rng.random_range(-0.5..0.5) > 0.0));
    }
    let cols = vec![
        Column::new("a", ColumnKind::Numeric),
        Column::new("b", ColumnKind::Numeric),
        Column::new("c", ColumnKind::Categorical),
        Column::new("y", ColumnKind::Categorical),
    ];
    Table::new(Schema::new(cols, 3).unwrap(), data, CodeBook::default()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn sampled_dags_are_acyclic(d in 2usize..9, seed in any::<u64>()) {
        let c = random_c(d, seed);
        let mut rng = seeded(seed ^ 0x5eed);
        for _ in 0..30 {
            let dag = sample_dag(&c, &mut rng);
            prop_assert!(dag.topological_order().is_some());
            for (a, b) in dag.edges() {
                prop_assert!(c.get(a, b) > 0.0);
            }
        }
    }

    #[test]
    fn scm_samples_are_complete_and_in_domain(seed in any::<u64>(), better in any::<bool>()) {
        let t = mixed_table(150, seed);
        let tier = if better { QualityTier::Better } else { QualityTier::Good };
        let dag = sample_dag(&random_c(4, seed), &mut seeded(seed));
        let scm = fit_scm(&dag, &t, tier, &mut seeded(seed.wrapping_add(1))).unwrap();
        let s = sample_scm(&scm, 200, &mut seeded(seed.wrapping_add(2))).unwrap();
        prop_assert_eq!(s.schema(), t.schema());
        prop_assert!(!s.has_missing());
        for col in [2usize, 3] {
            let seen: BTreeSet<usize> = t.observed_codes(col).into_iter().collect();
            for code in s.observed_codes(col) {
                prop_assert!(seen.contains(&code));
            }
        }
        // Same seeds, same output.
        let scm2 = fit_scm(&dag, &t, tier, &mut seeded(seed.wrapping_add(1))).unwrap();
        let s2 = sample_scm(&scm2, 200, &mut seeded(seed.wrapping_add(2))).unwrap();
        prop_assert_eq!(s.data(), s2.data());
    }

    #[test]
    fn discretize_respects_class_budget(
        values in prop::collection::vec(0u8..12, 1..80),
        c_hat in 2usize..8,
    ) {
        let vals: Vec<f64> = values.iter().map(|&v| f64::from(v)).collect();
        let classes = discretize(&vals, c_hat);
        let distinct: BTreeSet<usize> = classes.iter().copied().collect();
        prop_assert!(distinct.len() <= c_hat);
        // Classes 0..c_hat-2 each come from one original value.
        for k in 0..c_hat.saturating_sub(1) {
            let sources: BTreeSet<u8> = values.iter().zip(&classes).filter(|(_, &c)| c == k).map(|(&v, _)| v).collect();
            prop_assert!(sources.len() <= 1, "class {} maps to {:?}", k, sources);
        }
    }

    #[test]
    fn table_augment_views_are_valid_tables(seed in any::<u64>()) {
        let t = mixed_table(80, 3);
        let view = generate_table_augment(&t, &TableAugmentConfig::default(), &mut seeded(seed)).unwrap();
        prop_assert_eq!(view.n_rows(), t.n_rows());
        prop_assert!(view.n_classes() >= 1);
        prop_assert!(view.schema().target().kind == ColumnKind::Categorical);
    }
}

#[test]
fn every_arm_preserves_schema() {
    let t = mixed_table(120, 9);
    let c = random_c(4, 9);
    let arms = [
        ArmKind::Default,
        ArmKind::TableAugment(TableAugmentConfig::default()),
        ArmKind::MixedModel(Default::default()),
        ArmKind::Scm(ScmArmConfig::default()),
    ];
    for kind in arms {
        let arm = GeneratorArm { n_synthetic: 100, ..GeneratorArm::new(kind) };
        let label = arm.label();
        let src = build_source(&arm, &t, Some(&c), &mut seeded(1)).unwrap();
        let out = src.generate(&mut seeded(2)).unwrap();
        assert_eq!(out.schema(), t.schema(), "{label}");
        let again = build_source(&arm, &t, Some(&c), &mut seeded(1)).unwrap().generate(&mut seeded(2)).unwrap();
        let same = out.data().iter().zip(again.data().iter()).all(|(a, b)| a == b || (a.is_nan() && b.is_nan()));
        assert!(same, "{label} is not deterministic");
    }
}
