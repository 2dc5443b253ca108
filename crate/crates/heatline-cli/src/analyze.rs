//! Sweep-result analysis: Pearson correlation of each hyperparameter with
//! the best score, significance flagging, and per-value mean-score tables.

use std::collections::BTreeMap;

use serde::Serialize;

/// Correlations weaker than this are not considered.
pub const SIGNIFICANCE_THRESHOLD: f64 = 0.15;

/// Pearson correlation coefficient; `None` when either side is constant
/// (undefined, reported as n/a).
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let n = xs.len() as f64;
    if xs.is_empty() {
        return None;
    }
    let sum_x: f64 = xs.iter().sum();
    let sum_y: f64 = ys.iter().sum();
    let sum_xy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let sum_x2: f64 = xs.iter().map(|x| x * x).sum();
    let sum_y2: f64 = ys.iter().map(|y| y * y).sum();
    let cov = n * sum_xy - sum_x * sum_y;
    let var_x = n * sum_x2 - sum_x * sum_x;
    let var_y = n * sum_y2 - sum_y * sum_y;
    if var_x <= 0.0 || var_y <= 0.0 {
        return None;
    }
    Some(cov / (var_x.sqrt() * var_y.sqrt()))
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationRow {
    pub parameter: String,
    /// `None` when the column is constant across jobs.
    pub coefficient: Option<f64>,
    pub significant: bool,
    pub interpretation: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct CorrelationReport {
    pub jobs: usize,
    pub threshold: f64,
    pub rows: Vec<CorrelationRow>,
}

impl CorrelationReport {
    /// Correlate every hyperparameter column against the best scores.
    /// Columns are (name, per-job values aligned with `scores`).
    pub fn compute(columns: &[(String, Vec<Option<f64>>)], scores: &[f64]) -> Self {
        let mut rows = Vec::new();
        for (name, values) in columns {
            // Pair up only jobs where the parameter applies.
            let pairs: Vec<(f64, f64)> = values
                .iter()
                .zip(scores)
                .filter_map(|(v, s)| v.map(|v| (v, *s)))
                .collect();
            let coefficient = if pairs.len() >= 3 {
                let xs: Vec<f64> = pairs.iter().map(|(x, _)| *x).collect();
                let ys: Vec<f64> = pairs.iter().map(|(_, y)| *y).collect();
                pearson(&xs, &ys)
            } else {
                None
            };
            let significant = coefficient.map_or(false, |r| r.abs() > SIGNIFICANCE_THRESHOLD);
            let interpretation = match coefficient {
                None => "n/a",
                Some(_) if !significant => "below threshold",
                Some(r) if r > 0.0 => "positive correlation",
                Some(_) => "inverse correlation",
            };
            rows.push(CorrelationRow {
                parameter: name.clone(),
                coefficient,
                significant,
                interpretation,
            });
        }
        rows.sort_by(|a, b| {
            let ka = a.coefficient.map(f64::abs).unwrap_or(-1.0);
            let kb = b.coefficient.map(f64::abs).unwrap_or(-1.0);
            kb.total_cmp(&ka)
        });
        CorrelationReport { jobs: scores.len(), threshold: SIGNIFICANCE_THRESHOLD, rows }
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<28} {:>12} {:>12}  interpretation\n",
            "parameter", "coefficient", "significant"
        );
        for row in &self.rows {
            out.push_str(&format!(
                "{:<28} {:>12} {:>12}  {}\n",
                row.parameter,
                row.coefficient.map(|r| format!("{r:.4}")).unwrap_or_else(|| "n/a".into()),
                if row.significant { "yes" } else { "no" },
                row.interpretation
            ));
        }
        out
    }
}

/// Mean best score per distinct parameter value, grouped by reward family.
/// Means cover every job sharing the value.
pub fn mean_score_table(
    values: &[Option<f64>],
    rewards: &[String],
    scores: &[f64],
) -> Vec<(String, BTreeMap<String, f64>)> {
    let mut groups: BTreeMap<String, BTreeMap<String, (f64, usize)>> = BTreeMap::new();
    for ((value, reward), score) in values.iter().zip(rewards).zip(scores) {
        let Some(v) = value else { continue };
        let entry = groups
            .entry(format!("{v}"))
            .or_default()
            .entry(reward.clone())
            .or_insert((0.0, 0));
        entry.0 += score;
        entry.1 += 1;
    }
    groups
        .into_iter()
        .map(|(value, by_reward)| {
            let means = by_reward
                .into_iter()
                .map(|(family, (sum, n))| (family, sum / n as f64))
                .collect();
            (value, means)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent two-pass (mean-centered) reference used as the oracle.
    fn reference_pearson(xs: &[f64], ys: &[f64]) -> f64 {
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let sx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>().sqrt();
        let sy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum::<f64>().sqrt();
        cov / (sx * sy)
    }

    #[test]
    fn perfectly_linear_scores_give_r_one() {
        let epochs = [5.0, 10.0, 15.0, 20.0, 25.0];
        let scores: Vec<f64> = epochs.iter().map(|e| 3.0 * e + 7.0).collect();
        let r = pearson(&epochs, &scores).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        let inverted: Vec<f64> = epochs.iter().map(|e| -2.0 * e).collect();
        assert!((pearson(&epochs, &inverted).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_column_is_undefined() {
        assert!(pearson(&[2.0, 2.0, 2.0], &[1.0, 5.0, 3.0]).is_none());
    }

    #[test]
    fn five_job_fixture_matches_reference() {
        let xs = [10.0, 25.0, 50.0, 100.0, 200.0];
        let ys = [431.2, 512.9, 387.4, 644.0, 701.3];
        let ours = pearson(&xs, &ys).unwrap();
        let reference = reference_pearson(&xs, &ys);
        assert!((ours - reference).abs() < 1e-12, "{ours} vs {reference}");
    }

    #[test]
    fn report_flags_only_above_threshold() {
        let scores = vec![1.0, 2.0, 3.0, 4.0];
        let columns = vec![
            ("epochs".to_string(), vec![Some(5.0), Some(10.0), Some(15.0), Some(20.0)]),
            ("constant".to_string(), vec![Some(1.0); 4]),
            ("weak".to_string(), vec![Some(0.0), Some(1.0), Some(1.0), Some(0.0)]),
        ];
        let report = CorrelationReport::compute(&columns, &scores);
        let by_name = |n: &str| report.rows.iter().find(|r| r.parameter == n).unwrap();
        assert!(by_name("epochs").significant);
        assert!(!by_name("constant").significant);
        assert_eq!(by_name("constant").interpretation, "n/a");
        assert!(!by_name("weak").significant);
        // Sorted by |r| descending, n/a last.
        assert_eq!(report.rows[0].parameter, "epochs");
        assert_eq!(report.rows.last().unwrap().parameter, "constant");
    }

    #[test]
    fn mean_tables_group_by_value_and_reward() {
        let values = vec![Some(5.0), Some(5.0), Some(10.0), None];
        let rewards = vec![
            "symmetric".to_string(),
            "symmetric".to_string(),
            "symmetric".to_string(),
            "hyperbolic".to_string(),
        ];
        let scores = vec![100.0, 200.0, 300.0, 0.5];
        let table = mean_score_table(&values, &rewards, &scores);
        assert_eq!(table.len(), 2);
        assert_eq!(table[0].0, "10");
        assert_eq!(table[0].1["symmetric"], 300.0);
        assert_eq!(table[1].1["symmetric"], 150.0);
    }
}
