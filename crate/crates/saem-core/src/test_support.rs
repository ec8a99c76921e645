//! Shared fixtures for in-crate unit tests: small deterministic datasets
//! built directly in memory.

use crate::data::{Dataset, OutcomeKind, Schema, SubjectData};

/// Binary longitudinal dataset: times 0..=3, deterministic response pattern,
/// alternating treatment indicator `trt`.
pub fn binary_dataset(n: usize) -> Dataset {
    let schema = Schema {
        group: "id".into(),
        predictors: vec!["time".into(), "y".into()],
        response: "y".into(),
        covariates: vec!["trt".into()],
        censoring: None,
    };
    let subjects = (0..n)
        .map(|i| {
            let times: Vec<f64> = (0..4).map(|t| t as f64).collect();
            let resp: Vec<f64> = (0..4).map(|t| (((i + t) % 2) == 0) as u8 as f64).collect();
            SubjectData {
                id: format!("s{i}"),
                preds: vec![times, resp.clone()],
                response: resp,
                cens: None,
                covariates: vec![(i % 2) as f64],
            }
        })
        .collect();
    Dataset { subjects, schema, outcome: OutcomeKind::Binary, load_warnings: vec![] }
}

/// Gaussian dataset: times 0..=3, y = 1 + 0.5·t + 0.1·i (exact line per
/// subject, no noise), no covariates.
pub fn gaussian_dataset(n: usize) -> Dataset {
    let schema = Schema {
        group: "id".into(),
        predictors: vec!["time".into()],
        response: "y".into(),
        covariates: vec![],
        censoring: None,
    };
    let subjects = (0..n)
        .map(|i| {
            let times: Vec<f64> = (0..4).map(|t| t as f64).collect();
            let resp: Vec<f64> = times.iter().map(|&t| 1.0 + 0.5 * t + 0.1 * i as f64).collect();
            SubjectData {
                id: format!("s{i}"),
                preds: vec![times],
                response: resp,
                cens: None,
                covariates: vec![],
            }
        })
        .collect();
    Dataset { subjects, schema, outcome: OutcomeKind::Gaussian, load_warnings: vec![] }
}

/// Time-to-event dataset with the (anchor, terminal-row) layout: event times
/// spread over (0, 300], every third subject censored at 250.
pub fn tte_dataset(n: usize) -> Dataset {
    let schema = Schema {
        group: "id".into(),
        predictors: vec!["time".into()],
        response: "time".into(),
        covariates: vec![],
        censoring: Some("cens".into()),
    };
    let subjects = (0..n)
        .map(|i| {
            let censored = i % 3 == 2;
            let t = if censored { 250.0 } else { 20.0 + (i as f64 * 97.0) % 280.0 };
            SubjectData {
                id: format!("s{i}"),
                preds: vec![vec![0.0, t]],
                response: vec![0.0, t],
                cens: Some(vec![0.0, if censored { 1.0 } else { 0.0 }]),
                covariates: vec![],
            }
        })
        .collect();
    Dataset { subjects, schema, outcome: OutcomeKind::Tte, load_warnings: vec![] }
}
