//! Property-based checks of the numeric and data-handling invariants.

use proptest::prelude::*;

use saem_core::data::{
    discrete_proportions, kaplan_meier, strata, Categories, Dataset, OutcomeKind, Schema,
    SubjectData, TimeBins,
};
use saem_core::model::Transform;
use saem_core::numerics::{logsumexp, quantile};
use saem_core::saem::gamma_schedule;

proptest! {
    /// Scale transforms invert exactly: φ → ψ → φ.
    #[test]
    fn transforms_round_trip(phi in -20.0f64..20.0) {
        for tr in [Transform::Identity, Transform::Log] {
            let psi = tr.psi(phi);
            let back = tr.phi(psi).unwrap();
            prop_assert!((back - phi).abs() <= 1e-12 * phi.abs().max(1.0),
                "{tr:?}: {phi} -> {psi} -> {back}");
        }
    }

    /// The logit round-trip holds on the range where ψ itself can carry the
    /// precision: beyond |φ| ≈ 11 the rounding of ψ near 1 already loses
    /// more than 1e-12 of φ, for any implementation of the inverse.
    #[test]
    fn logit_round_trips_where_representable(phi in -10.0f64..10.0) {
        let psi = Transform::Logit.psi(phi);
        let back = Transform::Logit.phi(psi).unwrap();
        prop_assert!((back - phi).abs() <= 1e-12 * phi.abs().max(1.0),
            "{phi} -> {psi} -> {back}");
    }

    /// γ_k = 1 through exploration, then 1/(m+1) at smoothing step m.
    #[test]
    fn gamma_schedule_is_exact(k1 in 0usize..500, m in 1usize..500) {
        if k1 > 0 {
            prop_assert_eq!(gamma_schedule(k1.min(1).max(1), k1), 1.0);
            prop_assert_eq!(gamma_schedule(k1, k1), 1.0);
        }
        prop_assert_eq!(gamma_schedule(k1 + m, k1), 1.0 / (m as f64 + 1.0));
    }

    /// logsumexp dominates the max and is shift-equivariant.
    #[test]
    fn logsumexp_properties(xs in proptest::collection::vec(-500.0f64..500.0, 1..20),
                            c in -100.0f64..100.0) {
        let max = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = logsumexp(&xs);
        prop_assert!(lse >= max - 1e-12);
        let shifted: Vec<f64> = xs.iter().map(|x| x + c).collect();
        prop_assert!((logsumexp(&shifted) - (lse + c)).abs() < 1e-9);
    }

    /// Quantiles stay within the sample range and are monotone in p.
    #[test]
    fn quantiles_are_monotone(mut xs in proptest::collection::vec(-1e3f64..1e3, 2..40),
                              p1 in 0.0f64..1.0, p2 in 0.0f64..1.0) {
        let (lo, hi) = (p1.min(p2), p1.max(p2));
        let qlo = quantile(&xs, lo).unwrap();
        let qhi = quantile(&xs, hi).unwrap();
        prop_assert!(qlo <= qhi + 1e-12);
        xs.sort_by(f64::total_cmp);
        prop_assert!(qlo >= xs[0] - 1e-12 && qhi <= xs[xs.len() - 1] + 1e-12);
    }

    /// Tabulated category proportions sum to one in every nonempty
    /// (stratum, bin) cell, whatever the table.
    #[test]
    fn proportions_sum_to_one_on_random_tables(
        responses in proptest::collection::vec(
            proptest::collection::vec(0u8..4, 4), 2..8),
    ) {
        let schema = Schema {
            group: "id".into(),
            predictors: vec!["time".into()],
            response: "y".into(),
            censoring: None,
            covariates: vec![],
        };
        let times = [0.0, 1.0, 2.0, 3.0];
        let subjects: Vec<SubjectData> = responses
            .iter()
            .enumerate()
            .map(|(i, resp)| SubjectData {
                id: format!("s{i}"),
                preds: vec![times.to_vec()],
                response: resp.iter().map(|&v| v as f64).collect(),
                cens: None,
                covariates: vec![],
            })
            .collect();
        let ds = Dataset { subjects, schema, outcome: OutcomeKind::Count, load_warnings: vec![] };
        let bins = TimeBins::from_dataset(&ds).unwrap();
        let cats = Categories::from_dataset(&ds, None).unwrap();
        let strata_def = strata(&ds, None).unwrap();
        let rows = discrete_proportions(&ds, None, &bins, &cats, &strata_def);
        let mut sums: std::collections::BTreeMap<(String, String), f64> =
            std::collections::BTreeMap::new();
        for row in &rows {
            *sums.entry((row.stratum.clone(), row.bin.clone())).or_insert(0.0) +=
                row.proportion;
        }
        for ((stratum, bin), total) in sums {
            prop_assert!((total - 1.0).abs() < 1e-12, "{stratum}/{bin} sums to {total}");
        }
    }

    /// With no censoring, the product-limit estimator equals the empirical
    /// survival function at every event time.
    #[test]
    fn km_without_censoring_is_empirical_survival(
        times in proptest::collection::vec(0.1f64..100.0, 1..40),
    ) {
        let n = times.len() as f64;
        let pairs: Vec<(f64, bool)> = times.iter().map(|&t| (t, true)).collect();
        let steps = kaplan_meier(&pairs);
        for st in &steps {
            let surviving = times.iter().filter(|&&t| t > st.time).count() as f64;
            prop_assert!((st.survival - surviving / n).abs() < 1e-12,
                "S({}) = {} vs empirical {}", st.time, st.survival, surviving / n);
        }
    }
}
