use std::io::Write;

use serde::{Deserialize, Serialize};

use super::BenchmarkError;

/// The `k` training days closest to a query, nearest first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenarios {
    /// Positions in the training set.
    pub indices: Vec<usize>,
    /// Standardized Euclidean distances to the query.
    pub distances: Vec<f64>,
    /// Realization profile of each neighbour.
    pub profiles: Vec<Vec<f64>>,
}

impl Scenarios {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Equal weights.
    pub fn probabilities(&self) -> Vec<f64> {
        vec![1.0 / self.len() as f64; self.len()]
    }

    /// `scenario,train_index,distance,entry,value`, one row per profile entry.
    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["scenario", "train_index", "distance", "entry", "value"])?;
        for (s, ((i, d), p)) in self
            .indices
            .iter()
            .zip(&self.distances)
            .zip(&self.profiles)
            .enumerate()
        {
            for (e, v) in p.iter().enumerate() {
                w.write_record([
                    (s + 1).to_string(),
                    i.to_string(),
                    d.to_string(),
                    e.to_string(),
                    v.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Nearest training days to `query` by Euclidean distance after scaling
/// every feature to zero mean and unit variance over the training set.
/// Constant features are left unscaled. Ties go to the earlier day.
pub fn knn_scenarios(
    train_features: &[Vec<f64>],
    train_realizations: &[Vec<f64>],
    query: &[f64],
    k: usize,
) -> Result<Scenarios, BenchmarkError> {
    let n = train_features.len();
    if n == 0 {
        return Err(BenchmarkError::EmptyTraining);
    }
    if train_realizations.len() != n {
        return Err(BenchmarkError::Dimension {
            what: "training realizations",
            expected: n,
            got: train_realizations.len(),
        });
    }
    if k == 0 || k > n {
        return Err(BenchmarkError::Neighbours { k, available: n });
    }
    let dim = query.len();
    if let Some(bad) = train_features.iter().find(|f| f.len() != dim) {
        return Err(BenchmarkError::Dimension {
            what: "training features",
            expected: dim,
            got: bad.len(),
        });
    }
    let mut mean = vec![0.0; dim];
    for f in train_features {
        for (m, v) in mean.iter_mut().zip(f) {
            *m += v / n as f64;
        }
    }
    let mut scale = vec![0.0; dim];
    for f in train_features {
        for ((s, v), m) in scale.iter_mut().zip(f).zip(&mean) {
            *s += (v - m).powi(2) / n as f64;
        }
    }
    for s in &mut scale {
        *s = if *s > 0.0 { s.sqrt() } else { 1.0 };
    }
    let dist = |f: &[f64]| -> f64 {
        f.iter()
            .zip(query)
            .zip(&scale)
            .map(|((a, b), s)| ((a - b) / s).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut ranked: Vec<(f64, usize)> = train_features.iter().map(|f| dist(f)).zip(0..).collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.truncate(k);
    Ok(Scenarios {
        indices: ranked.iter().map(|r| r.1).collect(),
        distances: ranked.iter().map(|r| r.0).collect(),
        profiles: ranked
            .iter()
            .map(|r| train_realizations[r.1].clone())
            .collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn train() -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let f = vec![
            vec![0.0, 10.0],
            vec![1.0, 20.0],
            vec![2.0, 30.0],
            vec![3.0, 40.0],
        ];
        let y = (0..4).map(|i| vec![i as f64]).collect();
        (f, y)
    }

    #[test]
    fn exact_match_comes_first() {
        let (f, y) = train();
        let s = knn_scenarios(&f, &y, &[2.0, 30.0], 2).unwrap();
        assert_eq!(s.indices[0], 2);
        assert_eq!(s.distances[0], 0.0);
        assert_eq!(s.profiles[0], vec![2.0]);
    }

    #[test]
    fn full_k_returns_everything() {
        let (f, y) = train();
        let s = knn_scenarios(&f, &y, &[0.4, 12.0], 4).unwrap();
        let mut idx = s.indices.clone();
        idx.sort();
        assert_eq!(idx, vec![0, 1, 2, 3]);
        assert_eq!(s.probabilities(), vec![0.25; 4]);
    }

    #[test]
    fn ties_go_to_the_earlier_day() {
        let (f, y) = train();
        let s = knn_scenarios(&f, &y, &[1.5, 25.0], 2).unwrap();
        assert_eq!(s.indices, vec![1, 2]);
    }

    #[test]
    fn scaling_equalizes_features() {
        // Unscaled, the second feature would dominate and pick day 1.
        let f = vec![vec![0.0, 0.0], vec![10.0, 1.0], vec![1.0, 3.0]];
        let y = vec![vec![0.0]; 3];
        let s = knn_scenarios(&f, &y, &[0.0, 1.0], 1).unwrap();
        assert_eq!(s.indices, vec![0]);
    }

    #[test]
    fn bad_requests_are_rejected() {
        let (f, y) = train();
        assert!(matches!(
            knn_scenarios(&[], &[], &[0.0], 1),
            Err(BenchmarkError::EmptyTraining)
        ));
        assert!(matches!(
            knn_scenarios(&f, &y, &[0.0, 0.0], 5),
            Err(BenchmarkError::Neighbours { .. })
        ));
        assert!(knn_scenarios(&f, &y, &[0.0], 1).is_err());
    }

    #[test]
    fn csv_has_one_row_per_entry() {
        let (f, y) = train();
        let s = knn_scenarios(&f, &y, &[0.0, 10.0], 2).unwrap();
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("scenario,train_index,distance,entry,value\n1,0,0,0,0\n"));
    }
}
