//! Simulation of replicate datasets under a fitted model, and
//! visual-predictive-check (VPC) tables for discrete and time-to-event
//! outcomes, including the Kaplan–Meier VPC.
//!
//! The central design rule: observed and simulated statistics travel through
//! the *identical* tabulation code ([`crate::data::discrete_proportions`],
//! [`crate::data::kaplan_meier`]), so a VPC can never disagree with the
//! observed summary because of a binning discrepancy.

use nalgebra::DVector;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::data::{
    discrete_proportions, kaplan_meier, km_evaluate, strata, tte_pairs, Categories, Dataset,
    OutcomeKind, TimeBins,
};
use crate::error::{Error, Result};
use crate::model::{ErrorModel, NlmeModel};
use crate::numerics::quantile;
use crate::rng::stream;
use crate::saem::prepared::{OmegaOps, PreparedModel};
use crate::saem::SaemFit;

/// Simulated responses for every replicate, on the original design.
#[derive(Debug, Clone)]
pub enum SimulatedReplicates {
    /// Row-aligned responses: `rows[replicate][subject][row]`.
    Rows(Vec<Vec<Vec<f64>>>),
    /// Time-to-event: `(time, event)` per `[replicate][subject]`.
    Tte(Vec<Vec<(f64, bool)>>),
}

/// A set of replicate datasets simulated under a fitted model.
#[derive(Debug, Clone)]
pub struct SimulationTable {
    /// Number of replicates.
    pub nsim: usize,
    /// The simulated responses.
    pub reps: SimulatedReplicates,
    /// Warnings accumulated during simulation.
    pub warnings: Vec<String>,
}

/// One row of a VPC table: an observed statistic with its simulation band.
#[derive(Debug, Clone)]
pub struct VpcBand {
    /// Stratum label ("all" when unstratified).
    pub stratum: String,
    /// Time-bin label, or the grid time for a KM-VPC.
    pub bin: String,
    /// Category label ("survival" for KM, "median" for the median statistic).
    pub category: String,
    /// Observed statistic.
    pub observed: f64,
    /// 2.5% percentile over replicates.
    pub lo: f64,
    /// Median over replicates.
    pub med: f64,
    /// 97.5% percentile over replicates.
    pub hi: f64,
}

/// Per-bin statistic for discrete VPCs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VpcStatistic {
    /// Proportion of each category per time bin (the default).
    Proportions,
    /// Median response per time bin.
    Median,
}

/// VPC configuration.
#[derive(Debug, Clone)]
pub struct VpcOptions {
    /// Covariate to stratify on (must be a dataset covariate).
    pub stratify_by: Option<String>,
    /// Count-bin upper breaks (counts only); `None` = automatic.
    pub breaks: Option<Vec<f64>>,
    /// Statistic for discrete outcomes.
    pub statistic: VpcStatistic,
}

impl Default for VpcOptions {
    fn default() -> Self {
        VpcOptions { stratify_by: None, breaks: None, statistic: VpcStatistic::Proportions }
    }
}

/// Simulate `nsim` replicate datasets from a fitted model on the original
/// design: η ~ N(0, Ω̂) per subject, ψ built through the transforms, then the
/// model's simulation kernel row by row.
///
/// Counts are truncated at the maximum observed count. Simulated event times
/// beyond a subject's own follow-up end are censored at it.
pub fn simulate_from_fit(fit: &SaemFit, nsim: usize, seed: u64) -> Result<SimulationTable> {
    let pm = PreparedModel::new(&fit.model, &fit.data)?;
    let ops = OmegaOps::new(&pm.omega_iiv(&fit.omega));
    let outcome = fit.data.outcome;
    let max_count = if outcome == OutcomeKind::Count { Some(fit.data.max_response()) } else { None };
    let warnings = Vec::new();

    if outcome == OutcomeKind::Tte {
        let reps: Result<Vec<Vec<(f64, bool)>>> = (0..nsim)
            .into_par_iter()
            .map(|r| {
                (0..pm.n_subjects())
                    .map(|i| {
                        let mut rng = stream(seed, "simulate", &[r as u64, i as u64]);
                        let psi = draw_psi(&pm, fit, &ops, i, &mut rng);
                        let horizon = *pm.data.subjects[i]
                            .times()
                            .last()
                            .expect("tte subject has a terminal row");
                        fit.model.model.simulate_tte(&psi, horizon, &mut rng)
                    })
                    .collect()
            })
            .collect();
        return Ok(SimulationTable { nsim, reps: SimulatedReplicates::Tte(reps?), warnings });
    }

    let reps: Result<Vec<Vec<Vec<f64>>>> = (0..nsim)
        .into_par_iter()
        .map(|r| {
            (0..pm.n_subjects())
                .map(|i| {
                    let mut rng = stream(seed, "simulate", &[r as u64, i as u64]);
                    let psi = draw_psi(&pm, fit, &ops, i, &mut rng);
                    simulate_subject_rows(&fit.model, &pm, i, &psi, max_count, &mut rng)
                })
                .collect()
        })
        .collect();
    Ok(SimulationTable { nsim, reps: SimulatedReplicates::Rows(reps?), warnings })
}

/// Draw ψ_i = h(X_i b̂ + η), η ~ N(0, Ω̂) over the IIV coordinates.
pub(crate) fn draw_psi(
    pm: &PreparedModel,
    fit: &SaemFit,
    ops: &OmegaOps,
    i: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    use rand_distr::{Distribution, StandardNormal};
    let mut phi = pm.phi_pop(i, &fit.b);
    let q = pm.q();
    let z = DVector::from_iterator(q, (0..q).map(|_| StandardNormal.sample(rng)));
    let eta = &ops.sample * z;
    for (j, &k) in pm.iiv.iter().enumerate() {
        phi[k] += eta[j];
    }
    fit.model.psi_of_phi(phi.as_slice())
}

/// Simulate one subject's response rows given ψ (non-TTE outcomes).
pub(crate) fn simulate_subject_rows(
    model: &NlmeModel,
    pm: &PreparedModel,
    i: usize,
    psi: &[f64],
    max_count: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<f64>> {
    use rand_distr::{Distribution, StandardNormal};
    let subject = &pm.data.subjects[i];
    match model.model.outcome() {
        OutcomeKind::Gaussian => {
            let err = model
                .error
                .as_ref()
                .ok_or_else(|| Error::computation("Gaussian model without an error model"))?;
            let f = model.model.predict(psi, subject)?;
            Ok(f.into_iter()
                .map(|fv| {
                    let z: f64 = StandardNormal.sample(rng);
                    match err {
                        ErrorModel::Exponential { a } => fv * (a * z).exp(),
                        e => fv + e.sd(fv) * z,
                    }
                })
                .collect())
        }
        OutcomeKind::Tte => Err(Error::computation("TTE rows are simulated via simulate_tte")),
        _ => {
            let mut y = model.model.simulate(psi, subject, rng)?;
            if let Some(cap) = max_count {
                for v in &mut y {
                    if *v > cap {
                        *v = cap;
                    }
                }
            }
            Ok(y)
        }
    }
}

/// Compute VPC bands from a simulation table.
pub fn compute_vpc(
    fit: &SaemFit,
    sims: &SimulationTable,
    opts: &VpcOptions,
) -> Result<(Vec<VpcBand>, Vec<String>)> {
    let mut warnings = Vec::new();
    if sims.nsim < 100 {
        warnings.push(format!(
            "only {} replicates; at least 100 are recommended for stable bands",
            sims.nsim
        ));
    }
    let ds = &fit.data;
    let strata_def = strata(ds, opts.stratify_by.as_deref())?;
    match (&sims.reps, ds.outcome) {
        (SimulatedReplicates::Tte(reps), OutcomeKind::Tte) => {
            Ok((km_vpc(ds, reps, &strata_def)?, warnings))
        }
        (SimulatedReplicates::Rows(reps), _) => match opts.statistic {
            VpcStatistic::Proportions => {
                Ok((proportion_vpc(ds, reps, opts, &strata_def)?, warnings))
            }
            VpcStatistic::Median => Ok((median_vpc(ds, reps, &strata_def)?, warnings)),
        },
        _ => Err(Error::computation("simulation table does not match the dataset outcome kind")),
    }
}

fn proportion_vpc(
    ds: &Dataset,
    reps: &[Vec<Vec<f64>>],
    opts: &VpcOptions,
    strata_def: &[(String, Vec<usize>)],
) -> Result<Vec<VpcBand>> {
    let bins = TimeBins::from_dataset(ds)?;
    let cats = Categories::from_dataset(ds, opts.breaks.as_deref())?;
    let observed = discrete_proportions(ds, None, &bins, &cats, strata_def);
    // Key → accumulated simulated proportions, aligned by (stratum, bin, cat).
    let sim_tables: Vec<Vec<f64>> = reps
        .par_iter()
        .map(|resp| {
            discrete_proportions(ds, Some(resp), &bins, &cats, strata_def)
                .into_iter()
                .map(|p| p.proportion)
                .collect()
        })
        .collect();
    let mut bands = Vec::with_capacity(observed.len());
    for (row, obs) in observed.iter().enumerate() {
        let vals: Vec<f64> = sim_tables.iter().map(|t| t[row]).collect();
        bands.push(VpcBand {
            stratum: obs.stratum.clone(),
            bin: obs.bin.clone(),
            category: obs.category.clone(),
            observed: obs.proportion,
            lo: quantile(&vals, 0.025)?,
            med: quantile(&vals, 0.5)?,
            hi: quantile(&vals, 0.975)?,
        });
    }
    Ok(bands)
}

/// Median response per (stratum, time bin), banded over replicates.
fn median_vpc(
    ds: &Dataset,
    reps: &[Vec<Vec<f64>>],
    strata_def: &[(String, Vec<usize>)],
) -> Result<Vec<VpcBand>> {
    let bins = TimeBins::from_dataset(ds)?;
    let bin_labels = bins.labels();
    let medians = |resp_of: &dyn Fn(usize) -> Vec<f64>| -> Vec<Vec<Option<f64>>> {
        strata_def
            .iter()
            .map(|(_, subj_idx)| {
                let mut per_bin: Vec<Vec<f64>> = vec![Vec::new(); bins.len()];
                for &si in subj_idx {
                    let resp = resp_of(si);
                    for (row, &t) in ds.subjects[si].times().iter().enumerate() {
                        if let Some(b) = bins.assign(t) {
                            per_bin[b].push(resp[row]);
                        }
                    }
                }
                per_bin
                    .into_iter()
                    .map(|v| if v.is_empty() { None } else { quantile(&v, 0.5).ok() })
                    .collect()
            })
            .collect()
    };
    let observed = medians(&|si| ds.subjects[si].response.clone());
    let sims: Vec<Vec<Vec<Option<f64>>>> = reps
        .par_iter()
        .map(|resp| medians(&|si| resp[si].clone()))
        .collect();
    let mut bands = Vec::new();
    for (s, (label, _)) in strata_def.iter().enumerate() {
        for b in 0..bins.len() {
            let Some(obs) = observed[s][b] else { continue };
            let vals: Vec<f64> = sims.iter().filter_map(|t| t[s][b]).collect();
            bands.push(VpcBand {
                stratum: label.clone(),
                bin: bin_labels[b].clone(),
                category: "median".into(),
                observed: obs,
                lo: quantile(&vals, 0.025)?,
                med: quantile(&vals, 0.5)?,
                hi: quantile(&vals, 0.975)?,
            });
        }
    }
    Ok(bands)
}

/// Kaplan–Meier VPC: per replicate, the KM curve is evaluated on the common
/// grid of all observed event times (plus t=0), banded pointwise.
fn km_vpc(
    ds: &Dataset,
    reps: &[Vec<(f64, bool)>],
    strata_def: &[(String, Vec<usize>)],
) -> Result<Vec<VpcBand>> {
    let pairs = tte_pairs(ds)?;
    // Common grid: 0 plus the union of observed event times.
    let mut grid = vec![0.0];
    let mut event_times: Vec<f64> = pairs.iter().filter(|(_, e)| *e).map(|(t, _)| *t).collect();
    event_times.sort_by(|a, b| a.partial_cmp(b).unwrap());
    event_times.dedup();
    grid.extend(event_times);

    let mut bands = Vec::new();
    for (label, subj_idx) in strata_def {
        let sel = |src: &[(f64, bool)]| -> Vec<(f64, bool)> {
            subj_idx.iter().map(|&i| src[i]).collect()
        };
        let obs_curve = km_evaluate(&kaplan_meier(&sel(&pairs)), &grid);
        let sim_curves: Vec<Vec<f64>> = reps
            .par_iter()
            .map(|rep| km_evaluate(&kaplan_meier(&sel(rep)), &grid))
            .collect();
        for (g, &t) in grid.iter().enumerate() {
            let vals: Vec<f64> = sim_curves.iter().map(|c| c[g]).collect();
            bands.push(VpcBand {
                stratum: label.clone(),
                bin: format!("{t}"),
                category: "survival".into(),
                observed: obs_curve[g],
                lo: quantile(&vals, 0.025)?,
                med: quantile(&vals, 0.5)?,
                hi: quantile(&vals, 0.975)?,
            });
        }
    }
    Ok(bands)
}

/// Write VPC bands as tidy CSV (stratum, bin, category, obs, lo, med, hi).
pub fn write_vpc_csv(path: impl AsRef<std::path::Path>, bands: &[VpcBand]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    w.write_record(["stratum", "bin", "category", "obs", "lo", "med", "hi"])?;
    for b in bands {
        w.write_record([
            b.stratum.as_str(),
            b.bin.as_str(),
            b.category.as_str(),
            &format!("{}", b.observed),
            &format!("{}", b.lo),
            &format!("{}", b.med),
            &format!("{}", b.hi),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Write a simulation table as tidy CSV. Row layout: `replicate, id, time,
/// ysim` (non-TTE) or `replicate, id, time, event` (TTE).
pub fn write_simulation_csv(
    path: impl AsRef<std::path::Path>,
    ds: &Dataset,
    sims: &SimulationTable,
) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref())?;
    match &sims.reps {
        SimulatedReplicates::Rows(reps) => {
            w.write_record(["replicate", "id", "time", "ysim"])?;
            for (r, rep) in reps.iter().enumerate() {
                for (i, s) in ds.subjects.iter().enumerate() {
                    for (row, &t) in s.times().iter().enumerate() {
                        w.write_record([
                            &format!("{}", r + 1),
                            s.id.as_str(),
                            &format!("{t}"),
                            &format!("{}", rep[i][row]),
                        ])?;
                    }
                }
            }
        }
        SimulatedReplicates::Tte(reps) => {
            w.write_record(["replicate", "id", "time", "event"])?;
            for (r, rep) in reps.iter().enumerate() {
                for (i, s) in ds.subjects.iter().enumerate() {
                    let (t, event) = rep[i];
                    w.write_record([
                        &format!("{}", r + 1),
                        s.id.as_str(),
                        &format!("{t}"),
                        &format!("{}", u8::from(event)),
                    ])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}
