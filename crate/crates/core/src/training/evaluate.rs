use std::fmt::Write as _;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::Checkpoint;
use crate::backbone::{Backbone, BackboneConfig, EXTRACTOR_PREFIX, HEAD_PREFIX};
use crate::data::{preprocess, resize_nearest, FingerprintSample};
use crate::metrics::{confusion_counts, dice, jaccard, percent};
use crate::nn::{ParamStore, Tensor};
use crate::{Error, Result};

/// Probabilities at or above the threshold count as foreground.
pub const DEFAULT_THRESHOLD: f64 = 0.5;

const EVAL_BATCH: usize = 8;

/// Inference-only view of a trained model: the backbone parameters without
/// the discriminator.
#[derive(Clone, Debug)]
pub struct Segmenter {
    backbone: Backbone,
    params: ParamStore,
    side: usize,
}

/// Final-iteration output for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// Probability map at the network input resolution.
    pub probability: Array2<f64>,
    /// Binarized mask at the sample's native resolution.
    pub mask: Array2<u8>,
}

pub fn binarize(probability: &Array2<f64>, threshold: f64) -> Array2<u8> {
    probability.mapv(|p| u8::from(p >= threshold))
}

impl Segmenter {
    pub fn new(config: BackboneConfig, params: &ParamStore, side: usize) -> Result<Self> {
        let backbone = Backbone::new(config)?;
        let mut own = params.with_prefix(EXTRACTOR_PREFIX);
        own.merge(params.with_prefix(HEAD_PREFIX));
        let expected = backbone.init(0);
        if own.names().ne(expected.names()) {
            return Err(Error::Checkpoint(
                "parameters do not match the backbone config".into(),
            ));
        }
        Ok(Self {
            backbone,
            params: own,
            side,
        })
    }

    pub fn from_checkpoint(checkpoint: &Checkpoint) -> Result<Self> {
        let c = &checkpoint.config;
        Self::new(c.backbone(), &checkpoint.params, c.input_side)
    }

    pub fn backbone(&self) -> &Backbone {
        &self.backbone
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn side(&self) -> usize {
        self.side
    }

    /// Predictions for `samples`, processed in small batches.
    pub fn predict(
        &self,
        samples: &[FingerprintSample],
        threshold: f64,
    ) -> Result<Vec<Prediction>> {
        let depth = self.backbone.config().depth;
        let iterations = self.backbone.config().iterations();
        let mut out = Vec::with_capacity(samples.len());
        for chunk in samples.chunks(EVAL_BATCH) {
            let prepared: Vec<FingerprintSample> = chunk
                .iter()
                .map(|s| preprocess(s, self.side, depth))
                .collect::<Result<_>>()?;
            let images = Tensor::from_planes(prepared.iter().map(|s| s.image.view()));
            let result = self.backbone.forward(&self.params, &images, iterations)?;
            let last = result.masks.last().expect("at least one iteration");
            for (i, s) in chunk.iter().enumerate() {
                let probability = last.plane(i, 0);
                let (w, h) = s.native_size;
                let mask = resize_nearest(&binarize(&probability, threshold), h, w);
                out.push(Prediction { probability, mask });
            }
        }
        Ok(out)
    }
}

/// Mean scores of one database, as fractions in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatabaseScore {
    pub database: String,
    pub images: usize,
    pub dice: f64,
    pub jaccard: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub rows: Vec<DatabaseScore>,
}

/// Scores the final-iteration masks of `samples` against their ground
/// truth at native resolution; per-database means are unweighted over
/// images. Rows appear in first-seen database order.
pub fn evaluate_segmenter(
    segmenter: &Segmenter,
    samples: &[FingerprintSample],
    threshold: f64,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::Invalid("no samples to evaluate".into()));
    }
    if let Some(s) = samples.iter().find(|s| s.mask.is_none()) {
        return Err(Error::Precondition(format!(
            "sample {} of {} has no ground-truth mask",
            s.id, s.database
        )));
    }
    let predictions = segmenter.predict(samples, threshold)?;
    let mut sums: Vec<(String, usize, f64, f64)> = Vec::new();
    for (s, p) in samples.iter().zip(&predictions) {
        let truth = s.mask.as_ref().expect("checked above");
        let c = confusion_counts(p.mask.view(), truth.view())?;
        let i = match sums.iter().position(|r| r.0 == s.database) {
            Some(i) => i,
            None => {
                sums.push((s.database.clone(), 0, 0.0, 0.0));
                sums.len() - 1
            }
        };
        sums[i].1 += 1;
        sums[i].2 += dice(&c);
        sums[i].3 += jaccard(&c);
    }
    Ok(MetricReport {
        rows: sums
            .into_iter()
            .map(|(database, n, d, j)| DatabaseScore {
                database,
                images: n,
                dice: d / n as f64,
                jaccard: j / n as f64,
            })
            .collect(),
    })
}

pub fn evaluate(
    checkpoint: &Checkpoint,
    samples: &[FingerprintSample],
    threshold: f64,
) -> Result<MetricReport> {
    evaluate_segmenter(&Segmenter::from_checkpoint(checkpoint)?, samples, threshold)
}

impl MetricReport {
    pub fn get(&self, database: &str) -> Option<&DatabaseScore> {
        self.rows.iter().find(|r| r.database == database)
    }

    /// `database,dice,jaccard` with percentages to two decimals.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("database,dice,jaccard\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{}",
                r.database,
                percent(r.dice),
                percent(r.jaccard)
            )
            .unwrap();
        }
        s
    }

    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Database | Dice | Jaccard |\n|---|---:|---:|\n");
        for r in &self.rows {
            writeln!(
                s,
                "| {} | {} | {} |",
                r.database,
                percent(r.dice),
                percent(r.jaccard)
            )
            .unwrap();
        }
        s
    }
}

/// Two reports over the same databases, side by side.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub label_a: String,
    pub label_b: String,
    pub rows: Vec<ComparisonRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub database: String,
    pub dice_a: f64,
    pub dice_b: f64,
    pub jaccard_a: f64,
    pub jaccard_b: f64,
}

pub fn compare(
    label_a: &str,
    a: &MetricReport,
    label_b: &str,
    b: &MetricReport,
) -> Result<Comparison> {
    let dbs = |r: &MetricReport| {
        r.rows
            .iter()
            .map(|x| x.database.clone())
            .collect::<Vec<_>>()
    };
    if dbs(a) != dbs(b) {
        return Err(Error::Invalid(format!(
            "reports cover different databases: {:?} vs {:?}",
            dbs(a),
            dbs(b)
        )));
    }
    Ok(Comparison {
        label_a: label_a.to_string(),
        label_b: label_b.to_string(),
        rows: a
            .rows
            .iter()
            .zip(&b.rows)
            .map(|(x, y)| ComparisonRow {
                database: x.database.clone(),
                dice_a: x.dice,
                dice_b: y.dice,
                jaccard_a: x.jaccard,
                jaccard_b: y.jaccard,
            })
            .collect(),
    })
}

fn bold_higher(a: f64, b: f64) -> (String, String) {
    let (pa, pb) = (percent(a), percent(b));
    match pa
        .parse::<f64>()
        .unwrap()
        .total_cmp(&pb.parse::<f64>().unwrap())
    {
        std::cmp::Ordering::Greater => (format!("**{pa}**"), pb),
        std::cmp::Ordering::Less => (pa, format!("**{pb}**")),
        std::cmp::Ordering::Equal => (pa, pb),
    }
}

impl Comparison {
    /// Databases where `b` has the strictly higher Dice.
    pub fn wins_b(&self) -> usize {
        self.rows.iter().filter(|r| r.dice_b > r.dice_a).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("database,dice_a,dice_b,jaccard_a,jaccard_b\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.database,
                percent(r.dice_a),
                percent(r.dice_b),
                percent(r.jaccard_a),
                percent(r.jaccard_b)
            )
            .unwrap();
        }
        s
    }

    /// Markdown table with the better value of each pair in bold.
    pub fn to_markdown(&self) -> String {
        let (a, b) = (&self.label_a, &self.label_b);
        let mut s = format!(
            "| Database | Dice ({a}) | Dice ({b}) | Jaccard ({a}) | Jaccard ({b}) |\n|---|---:|---:|---:|---:|\n"
        );
        for r in &self.rows {
            let (da, db) = bold_higher(r.dice_a, r.dice_b);
            let (ja, jb) = bold_higher(r.jaccard_a, r.jaccard_b);
            writeln!(s, "| {} | {da} | {db} | {ja} | {jb} |", r.database).unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(rows: &[(&str, f64, f64)]) -> MetricReport {
        MetricReport {
            rows: rows
                .iter()
                .map(|&(d, dice, jaccard)| DatabaseScore {
                    database: d.into(),
                    images: 1,
                    dice,
                    jaccard,
                })
                .collect(),
        }
    }

    #[test]
    fn threshold_ties_are_foreground() {
        let p = Array2::from_shape_vec((1, 3), vec![0.4999, 0.5, 0.9]).unwrap();
        assert_eq!(binarize(&p, 0.5).into_raw_vec_and_offset().0, [0, 1, 1]);
    }

    #[test]
    fn csv_and_markdown_layouts() {
        let r = report(&[("2000DB1", 0.7124, 0.6), ("2002DB3", 1.0, 1.0)]);
        assert_eq!(
            r.to_csv(),
            "database,dice,jaccard\n2000DB1,71.24,60.00\n2002DB3,100.00,100.00\n"
        );
        assert!(r.to_markdown().contains("| 2000DB1 | 71.24 | 60.00 |"));
    }

    #[test]
    fn comparison_bolds_the_winner() {
        let a = report(&[("2000DB1", 0.7124, 0.60), ("2000DB2", 0.9, 0.8)]);
        let b = report(&[("2000DB1", 0.7685, 0.65), ("2000DB2", 0.8, 0.8)]);
        let c = compare("baseline", &a, "aligned", &b).unwrap();
        assert_eq!(c.wins_b(), 1);
        let md = c.to_markdown();
        assert!(
            md.contains("| 2000DB1 | 71.24 | **76.85** | 60.00 | **65.00** |"),
            "{md}"
        );
        assert!(
            md.contains("| 2000DB2 | **90.00** | 80.00 | 80.00 | 80.00 |"),
            "{md}"
        );
        assert!(c
            .to_csv()
            .starts_with("database,dice_a,dice_b,jaccard_a,jaccard_b\n2000DB1,71.24,76.85,"));
        assert!(compare("a", &a, "b", &report(&[("x", 0.0, 0.0)])).is_err());
    }
}
