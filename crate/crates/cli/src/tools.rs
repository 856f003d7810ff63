use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use qtnn_core::bnn::{predict_mc, BayesNet};
use qtnn_core::data::{to_ppm, LabeledImageSet};
use qtnn_core::nn::{argmax, streams};
use qtnn_core::qt::{bound_state_energies, transmission_with_grad};
use qtnn_core::{Barrier, SeedStream};

use crate::error::{CliError, CliResult};

/// One row of the activation table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActivationRow {
    pub energy: f64,
    pub t: f64,
    pub dt_de: f64,
}

/// `steps` evenly spaced energies from `e_min` to `e_max` inclusive, with
/// the transmission and its derivative at each.
pub fn activation_table(
    barrier: &Barrier,
    e_min: f64,
    e_max: f64,
    steps: usize,
) -> CliResult<Vec<ActivationRow>> {
    if steps < 2 {
        return Err(CliError::Config(format!(
            "steps must be at least 2, got {steps}"
        )));
    }
    if !(e_min.is_finite() && e_max.is_finite() && e_min > 0.0 && e_min < e_max) {
        return Err(CliError::Config(format!(
            "energy range needs 0 < E_min < E_max, got [{e_min}, {e_max}]"
        )));
    }
    let h = (e_max - e_min) / (steps - 1) as f64;
    (0..steps)
        .map(|i| {
            let energy = if i == steps - 1 {
                e_max
            } else {
                e_min + h * i as f64
            };
            let (t, dt_de) = transmission_with_grad(energy, barrier)?;
            Ok(ActivationRow { energy, t, dt_de })
        })
        .collect()
}

pub fn activation_table_csv(rows: &[ActivationRow]) -> String {
    let mut out = String::from("E,T,dTdE\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.energy, r.t, r.dt_de);
    }
    out
}

/// One line per bound level: `index<TAB>E_n<TAB>E_n + V₀`, lowest first.
pub fn bound_states_table(barrier: &Barrier) -> String {
    let mut out = String::new();
    for (i, e) in bound_state_energies(barrier).iter().enumerate() {
        let _ = writeln!(out, "{i}\t{e}\t{}", e + barrier.height());
    }
    out
}

/// `[[TN, FP], [FN, TP]]` indexed as `[true][pred]`.
pub fn confusion(truth: &[usize], pred: &[usize]) -> [[usize; 2]; 2] {
    let mut m = [[0; 2]; 2];
    for (&t, &p) in truth.iter().zip(pred) {
        m[t.min(1)][p.min(1)] += 1;
    }
    m
}

/// Predicted class and probability of class 1 for each image, averaged over
/// `mc_samples` posterior draws.
pub fn predict_images(
    net: &BayesNet,
    set: &LabeledImageSet,
    mc_samples: usize,
    seed: u64,
) -> CliResult<(Vec<usize>, Vec<f64>)> {
    let ds = set.to_dataset();
    let stream = SeedStream::new(seed, streams::EVAL).child(0);
    let proba = predict_mc(net, &ds.inputs, mc_samples, &stream)?;
    let pred = (0..proba.rows()).map(|r| argmax(proba.row(r))).collect();
    let p1 = (0..proba.rows())
        .map(|r| proba.row(r).get(1).copied().unwrap_or(0.0))
        .collect();
    Ok((pred, p1))
}

/// Writes every misclassified image of `set` as `mis_<i>_<true>_<pred>.ppm`
/// plus an `index.csv` (`file,true,pred,p_military`) into `out_dir`.
/// Returns the number of images written.
pub fn dump_misclassified(
    net: &BayesNet,
    set: &LabeledImageSet,
    mc_samples: usize,
    seed: u64,
    out_dir: &Path,
) -> CliResult<usize> {
    let (pred, p1) = predict_images(net, set, mc_samples, seed)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut index = String::from("file,true,pred,p_military\n");
    let mut written = 0;
    for (i, img) in set.images.iter().enumerate() {
        let truth = usize::from(set.labels[i]);
        if pred[i] == truth {
            continue;
        }
        let name = format!("mis_{i}_{truth}_{}.ppm", pred[i]);
        let path = out_dir.join(&name);
        fs::write(&path, to_ppm(img)).map_err(|e| CliError::io(&path, e))?;
        let _ = writeln!(index, "{name},{truth},{},{}", pred[i], p1[i]);
        written += 1;
    }
    let path = out_dir.join("index.csv");
    fs::write(&path, index).map_err(|e| CliError::io(&path, e))?;
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn table_validation() {
        let b = Barrier::default();
        assert!(matches!(
            activation_table(&b, 0.5, 0.5, 1),
            Err(CliError::Config(_))
        ));
        assert!(activation_table(&b, 0.0, 1.0, 5).is_err());
        assert!(activation_table(&b, 2.0, 1.0, 5).is_err());
    }

    #[test]
    fn table_hits_resonance_and_stays_in_unit_interval() {
        let b = Barrier::default();
        let e_res = 1.0 + PI * PI;
        let rows = activation_table(&b, 0.5, e_res, 64).unwrap();
        assert_eq!(rows.len(), 64);
        assert_eq!(rows.last().unwrap().energy, e_res);
        assert!((rows.last().unwrap().t - 1.0).abs() < 1e-12);
        assert!(rows.iter().all(|r| (0.0..=1.0).contains(&r.t)));
        let csv = activation_table_csv(&rows);
        assert!(csv.starts_with("E,T,dTdE\n"));
        assert_eq!(csv.lines().count(), 65);
    }

    #[test]
    fn bound_state_lines() {
        assert_eq!(
            bound_states_table(&Barrier::new(100.0, 1.0).unwrap())
                .lines()
                .count(),
            4
        );
        assert_eq!(
            bound_states_table(&Barrier::new(0.01, 1.0).unwrap())
                .lines()
                .count(),
            1
        );
        let t = bound_states_table(&Barrier::new(100.0, 1.0).unwrap());
        let es: Vec<f64> = t
            .lines()
            .map(|l| l.split('\t').nth(1).unwrap().parse().unwrap())
            .collect();
        assert!(es.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn confusion_counts() {
        let m = confusion(&[0, 0, 1, 1, 1], &[0, 1, 1, 0, 1]);
        assert_eq!(m, [[1, 1], [1, 2]]);
    }
}
