//! Metrics CSV: one row per (benchmark, mode, seed), then one `mean±std`
//! row per (benchmark, mode).

use lrrg_core::metrics::MetricsReport;

pub const HEADER: [&str; 9] = ["benchmark", "mode", "seed", "bleu1", "bleu4", "rouge_l", "precision", "recall", "f1"];
/// `seed` cell of aggregate rows.
pub const AGGREGATE_SEED: &str = "mean±std";
const SEP: char = '±';

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRow {
    pub benchmark: String,
    pub mode: String,
    pub seed: u64,
    /// bleu1, bleu4, rouge_l, precision, recall, f1.
    pub values: [f64; 6],
}

impl MetricsRow {
    pub fn new(benchmark: &str, mode: &str, seed: u64, r: &MetricsReport) -> MetricsRow {
        MetricsRow {
            benchmark: benchmark.into(),
            mode: mode.into(),
            seed,
            values: [r.bleu1, r.bleu4, r.rouge_l, r.precision, r.recall, r.f1],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub benchmark: String,
    pub mode: String,
    pub mean: [f64; 6],
    /// Sample standard deviation (n − 1); 0 for a single run.
    pub std: [f64; 6],
    pub runs: usize,
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups by (benchmark, mode) in order of first appearance.
pub fn aggregate(rows: &[MetricsRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(&str, &str)> = Vec::new();
    for r in rows {
        let k = (r.benchmark.as_str(), r.mode.as_str());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(b, m)| {
            let group: Vec<&MetricsRow> = rows.iter().filter(|r| r.benchmark == b && r.mode == m).collect();
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for i in 0..6 {
                let xs: Vec<f64> = group.iter().map(|r| r.values[i]).collect();
                (mean[i], std[i]) = mean_std(&xs);
            }
            AggregateRow {
                benchmark: b.into(),
                mode: m.into(),
                mean,
                std,
                runs: group.len(),
            }
        })
        .collect()
}

pub fn render(rows: &[MetricsRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(HEADER).expect("in-memory csv");
    for r in rows {
        let mut rec = vec![r.benchmark.clone(), r.mode.clone(), r.seed.to_string()];
        rec.extend(r.values.iter().map(f64::to_string));
        w.write_record(&rec).expect("in-memory csv");
    }
    for a in aggregate(rows) {
        let mut rec = vec![a.benchmark.clone(), a.mode.clone(), AGGREGATE_SEED.to_string()];
        rec.extend((0..6).map(|i| format!("{}{SEP}{}", a.mean[i], a.std[i])));
        w.write_record(&rec).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CsvParseError {
    #[error("header differs from the documented field order")]
    Header,
    #[error("row {row}: {reason}")]
    Row { row: usize, reason: String },
}

/// Reads a file produced by [`render`].
pub fn parse(bytes: &[u8]) -> Result<(Vec<MetricsRow>, Vec<AggregateRow>), CsvParseError> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_reader(bytes);
    let mut recs = r.records();
    let header = recs.next().and_then(Result::ok).ok_or(CsvParseError::Header)?;
    if header.iter().ne(HEADER) {
        return Err(CsvParseError::Header);
    }
    let (mut detail, mut agg) = (Vec::new(), Vec::new());
    for (i, rec) in recs.enumerate() {
        let row = i + 2;
        let bad = |reason: String| CsvParseError::Row { row, reason };
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        if rec.len() != HEADER.len() {
            return Err(bad(format!("expected {} fields", HEADER.len())));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
        if &rec[2] == AGGREGATE_SEED {
            let mut mean = [0.0; 6];
            let mut std = [0.0; 6];
            for k in 0..6 {
                let (m, s) = rec[3 + k].split_once(SEP).ok_or_else(|| bad("missing ±".into()))?;
                mean[k] = num(m)?;
                std[k] = num(s)?;
            }
            agg.push(AggregateRow {
                benchmark: rec[0].into(),
                mode: rec[1].into(),
                mean,
                std,
                runs: 0,
            });
        } else {
            let mut values = [0.0; 6];
            for k in 0..6 {
                values[k] = num(&rec[3 + k])?;
            }
            detail.push(MetricsRow {
                benchmark: rec[0].into(),
                mode: rec[1].into(),
                seed: rec[2].parse().map_err(|e| bad(format!("seed: {e}")))?,
                values,
            });
        }
    }
    Ok((detail, agg))
}
