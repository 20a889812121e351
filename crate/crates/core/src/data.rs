//! Datasets and preprocessing.
//!
//! Two pipelines live here. UCR-style classification files (label first,
//! tab separated) are loaded into a [`Dataset`], z-normalized per sample and
//! split 80/20 in a stratified way. Daily stock returns are held in a
//! [`ReturnsPanel`] and cut into overlapping study periods of 1000 days
//! (750 train / 250 test), each turned into 240-step windows labelled by
//! whether the next-day return beats the cross-sectional median.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use chrono::{Datelike, NaiveDate, Weekday};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::rng::RngStream;
use crate::transforms::TimeSeries;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub samples: Vec<TimeSeries>,
    pub n_classes: usize,
    /// Original label text for each class index.
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, samples: Vec<TimeSeries>, n_classes: usize) -> Result<Self> {
        let class_names = (0..n_classes).map(|c| c.to_string()).collect();
        let ds = Self { name: name.into(), samples, n_classes, class_names };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(first) = self.samples.first() {
            let l = first.len();
            for (i, s) in self.samples.iter().enumerate() {
                s.validate()?;
                if s.len() != l {
                    return Err(Error::shape(format!("sample {i} has length {}, expected {l}", s.len())));
                }
                if s.label >= self.n_classes {
                    return Err(Error::domain(format!(
                        "sample {i} label {} outside [0, {})",
                        s.label, self.n_classes
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Common series length `L` (0 when empty).
    pub fn series_len(&self) -> usize {
        self.samples.first().map_or(0, TimeSeries::len)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    pub fn subset(&self, indices: &[usize], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            n_classes: self.n_classes,
            class_names: self.class_names.clone(),
        }
    }

    /// Z-normalize every sample.
    pub fn znormalized(&self) -> Dataset {
        Dataset {
            samples: self.samples.iter().map(znormalize_per_sample).collect(),
            ..self.clone()
        }
    }
}

/// Parse a UCR-style file: each line is a label followed by `L` values,
/// tab separated. Labels are remapped onto `0..C` in sorted order (numeric
/// when every label parses as a number).
pub fn load_ucr_tsv(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ucr_tsv(BufReader::new(file), path, name)
}

pub fn parse_ucr_tsv<R: BufRead>(reader: R, path: &Path, name: String) -> Result<Dataset> {
    let fmt_err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
    let mut rows: Vec<(String, Vec<f64>, usize)> = Vec::new();
    let mut width = None;
    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = if line.contains('\t') {
            line.split('\t').collect()
        } else if line.contains(',') {
            line.split(',').collect()
        } else {
            line.split_whitespace().collect()
        };
        let label = fields[0].trim().to_string();
        if label.is_empty() {
            return Err(fmt_err(lineno, "empty label".into()));
        }
        let values = fields[1..]
            .iter()
            .map(|f| {
                let f = f.trim();
                match f.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(v),
                    Ok(_) => Err(fmt_err(lineno, format!("non-finite value `{f}`"))),
                    Err(_) => Err(fmt_err(lineno, format!("non-numeric value `{f}`"))),
                }
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() < 2 {
            return Err(fmt_err(lineno, format!("series needs at least 2 values, found {}", values.len())));
        }
        match width {
            None => width = Some(values.len()),
            Some(w) if w != values.len() => {
                return Err(fmt_err(lineno, format!("ragged row: {} values, expected {w}", values.len())));
            }
            _ => {}
        }
        rows.push((label, values, lineno));
    }
    let class_names = sorted_labels(rows.iter().map(|(l, _, _)| l.as_str()));
    let index: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let samples = rows
        .iter()
        .map(|(label, values, _)| TimeSeries { values: values.clone(), label: index[label.as_str()] })
        .collect();
    let n_classes = class_names.len();
    let ds = Dataset { name, samples, n_classes, class_names };
    ds.validate()?;
    Ok(ds)
}

fn sorted_labels<'a>(labels: impl Iterator<Item = &'a str>) -> Vec<String> {
    let unique: BTreeSet<&str> = labels.collect();
    let mut names: Vec<String> = unique.into_iter().map(str::to_string).collect();
    let numeric: Option<Vec<f64>> = names.iter().map(|n| n.parse::<f64>().ok()).collect();
    if let Some(nums) = numeric {
        let mut pairs: Vec<(f64, String)> = nums.into_iter().zip(names).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        names = pairs.into_iter().map(|(_, n)| n).collect();
    }
    names
}

/// Re-index `ds` onto another dataset's class names (e.g. a test file
/// loaded separately from its train file).
pub fn align_classes(ds: &Dataset, class_names: &[String]) -> Result<Dataset> {
    let map: Vec<usize> = ds
        .class_names
        .iter()
        .map(|n| {
            class_names
                .iter()
                .position(|c| c == n)
                .ok_or_else(|| Error::domain(format!("{}: label `{n}` not present in the training data", ds.name)))
        })
        .collect::<Result<_>>()?;
    Ok(Dataset {
        name: ds.name.clone(),
        samples: ds.samples.iter().map(|s| TimeSeries { values: s.values.clone(), label: map[s.label] }).collect(),
        n_classes: class_names.len(),
        class_names: class_names.to_vec(),
    })
}

/// Write a dataset back out in label-first TSV form using the original class
/// names.
pub fn write_ucr_tsv<W: Write>(ds: &Dataset, out: &mut W) -> Result<()> {
    for s in &ds.samples {
        write!(out, "{}", ds.class_names[s.label])?;
        for v in &s.values {
            write!(out, "\t{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// `(x - mean) / std` with the population standard deviation. A constant
/// sample becomes all zeros (with a warning).
pub fn znormalize_per_sample(x: &TimeSeries) -> TimeSeries {
    let (mean, std) = mean_std(&x.values);
    let scale = x.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if std == 0.0 || std <= 1e-14 * scale {
        log::warn!("constant sample (std = 0); normalized to zeros");
        return TimeSeries { values: vec![0.0; x.len()], label: x.label };
    }
    TimeSeries {
        values: x.values.iter().map(|v| (v - mean) / std).collect(),
        label: x.label,
    }
}

/// Stratified train/validation split. Each class contributes
/// `round(fraction * n_c)` samples to train (clamped so both sides get at
/// least one); classes with a single sample go wholly to train.
pub fn stratified_split(ds: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if ds.is_empty() {
        return Err(Error::domain("cannot split an empty dataset"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("split fraction {fraction} outside (0, 1)")));
    }
    let mut rng = RngStream::new(seed).rng();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, s) in ds.samples.iter().enumerate() {
        by_class[s.label].push(i);
    }
    let mut in_train = vec![false; ds.len()];
    for (class, members) in by_class.iter_mut().enumerate() {
        let n = members.len();
        if n == 0 {
            continue;
        }
        if n < 2 {
            log::warn!("class {class} has {n} sample(s); assigned wholly to train");
            members.iter().for_each(|&i| in_train[i] = true);
            continue;
        }
        members.shuffle(&mut rng);
        let n_train = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        members[..n_train].iter().for_each(|&i| in_train[i] = true);
    }
    let train: Vec<usize> = (0..ds.len()).filter(|&i| in_train[i]).collect();
    let val: Vec<usize> = (0..ds.len()).filter(|&i| !in_train[i]).collect();
    Ok((ds.subset(&train, format!("{}/train", ds.name)), ds.subset(&val, format!("{}/val", ds.name))))
}

/// `n` independent stratified shuffles, split `k` seeded from `(seed, k)`.
pub fn stratified_splits(ds: &Dataset, fraction: f64, n: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    (0..n as u64)
        .map(|k| stratified_split(ds, fraction, RngStream::new(seed).split(k).key()))
        .collect()
}

/// Daily simple returns, day-major, with a presence mask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnsPanel {
    pub dates: Vec<NaiveDate>,
    pub tickers: Vec<String>,
    returns: Vec<f64>,
    present: Vec<bool>,
}

impl ReturnsPanel {
    /// `returns[day * stocks + stock]`; entries with `present == false` are
    /// ignored.
    pub fn new(dates: Vec<NaiveDate>, tickers: Vec<String>, returns: Vec<f64>, present: Vec<bool>) -> Result<Self> {
        let n = dates.len() * tickers.len();
        if returns.len() != n || present.len() != n {
            return Err(Error::shape(format!(
                "panel {}x{} needs {n} entries, got {} returns and {} mask flags",
                dates.len(),
                tickers.len(),
                returns.len(),
                present.len()
            )));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::domain(format!("dates not strictly increasing at {}", w[1])));
        }
        if let Some(i) = (0..n).find(|&i| present[i] && !returns[i].is_finite()) {
            return Err(Error::numeric(format!(
                "non-finite return on {} for {}",
                dates[i / tickers.len()],
                tickers[i % tickers.len()]
            )));
        }
        Ok(Self { dates, tickers, returns, present })
    }

    pub fn days(&self) -> usize {
        self.dates.len()
    }

    pub fn stocks(&self) -> usize {
        self.tickers.len()
    }

    pub fn get(&self, day: usize, stock: usize) -> Option<f64> {
        let i = day * self.stocks() + stock;
        self.present[i].then(|| self.returns[i])
    }

    /// Returns present on `day`, with their stock index.
    pub fn day_returns(&self, day: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (0..self.stocks()).filter_map(move |s| self.get(day, s).map(|r| (s, r)))
    }

    pub fn mask_out(&mut self, day: usize, stock: usize) {
        let s = self.stocks();
        self.present[day * s + stock] = false;
    }

    /// Cross-sectional median of present returns on `day`.
    pub fn daily_median(&self, day: usize) -> Option<f64> {
        let mut v: Vec<f64> = self.day_returns(day).map(|(_, r)| r).collect();
        median(&mut v)
    }

    /// Long-format CSV with header `date,ticker,return`; absent entries are
    /// simply omitted.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "ticker", "return"])?;
        for (d, date) in self.dates.iter().enumerate() {
            for (s, ticker) in self.tickers.iter().enumerate() {
                if let Some(r) = self.get(d, s) {
                    w.write_record([date.to_string(), ticker.clone(), r.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_csv_from(file, path)
    }

    pub fn read_csv_from<R: std::io::Read>(input: R, path: &Path) -> Result<Self> {
        let fmt_err = |line: usize, msg: String| Error::Format { path: path.to_path_buf(), line, msg };
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).comment(Some(b'#')).from_reader(input);
        let headers = reader.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h.eq_ignore_ascii_case(name))
                .ok_or_else(|| fmt_err(1, format!("missing column `{name}`")))
        };
        let (dc, tc, rc) = (col("date")?, col("ticker")?, col("return")?);
        let mut entries: BTreeMap<(NaiveDate, String), f64> = BTreeMap::new();
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line() as usize);
            let date = NaiveDate::parse_from_str(&record[dc], "%Y-%m-%d")
                .map_err(|e| fmt_err(line, format!("bad date `{}`: {e}", &record[dc])))?;
            let ticker = record[tc].to_string();
            let r: f64 = record[rc]
                .parse()
                .map_err(|_| fmt_err(line, format!("non-numeric return `{}`", &record[rc])))?;
            if !r.is_finite() {
                return Err(fmt_err(line, format!("non-finite return `{}`", &record[rc])));
            }
            if entries.insert((date, ticker.clone()), r).is_some() {
                return Err(fmt_err(line, format!("duplicate entry for {ticker} on {date}")));
            }
        }
        let dates: Vec<NaiveDate> = entries.keys().map(|(d, _)| *d).collect::<BTreeSet<_>>().into_iter().collect();
        let tickers: Vec<String> = entries.keys().map(|(_, t)| t.clone()).collect::<BTreeSet<_>>().into_iter().collect();
        let day_idx: BTreeMap<NaiveDate, usize> = dates.iter().enumerate().map(|(i, d)| (*d, i)).collect();
        let stock_idx: BTreeMap<&str, usize> = tickers.iter().enumerate().map(|(i, t)| (t.as_str(), i)).collect();
        let n = dates.len() * tickers.len();
        let mut returns = vec![0.0; n];
        let mut present = vec![false; n];
        for ((d, t), r) in &entries {
            let i = day_idx[d] * tickers.len() + stock_idx[t.as_str()];
            returns[i] = *r;
            present[i] = true;
        }
        ReturnsPanel::new(dates, tickers, returns, present)
    }
}

/// Median of an unsorted slice (mean of the middle pair for even counts).
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 { values[n / 2] } else { 0.5 * (values[n / 2 - 1] + values[n / 2]) })
}

/// Binary labels: 1 iff strictly above the median of the given returns.
pub fn median_labels(returns: &[f64]) -> Vec<usize> {
    let mut sorted = returns.to_vec();
    let Some(m) = median(&mut sorted) else { return Vec::new() };
    returns.iter().map(|&r| usize::from(r > m)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub split_len: usize,
    pub stride: usize,
    pub train_len: usize,
    pub window: usize,
    pub window_stride: usize,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { split_len: 1000, stride: 250, train_len: 750, window: 240, window_stride: 1 }
    }
}

impl SplitSpec {
    pub fn test_len(&self) -> usize {
        self.split_len - self.train_len
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_len >= self.split_len || self.stride == 0 || self.window_stride == 0 {
            return Err(Error::domain("split spec needs train_len < split_len and positive strides"));
        }
        if self.window < 2 || self.window >= self.train_len {
            return Err(Error::domain(format!(
                "window {} must be in [2, train_len={})",
                self.window, self.train_len
            )));
        }
        Ok(())
    }

    /// Start days of every complete study period in a `days`-long panel.
    pub fn starts(&self, days: usize) -> Vec<usize> {
        if days < self.split_len {
            return Vec::new();
        }
        (0..=days - self.split_len).step_by(self.stride).collect()
    }
}

/// Pooled standardization statistics over every present train-day return.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainStats {
    pub mean: f64,
    pub std: f64,
    pub count: usize,
}

/// A window ending at absolute day `end` for one stock; its label refers to
/// day `end + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowRef {
    pub stock: usize,
    pub end: usize,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct FinancialSplit {
    pub index: usize,
    pub start: usize,
    pub spec: SplitSpec,
    pub stats: TrainStats,
    pub train: Vec<WindowRef>,
    pub test: Vec<WindowRef>,
    // stock-major standardized returns for days start..start+split_len
    standardized: Vec<f64>,
}

impl FinancialSplit {
    /// Standardized values of a window (length `spec.window`).
    pub fn window_values(&self, w: &WindowRef) -> &[f64] {
        let base = w.stock * self.spec.split_len;
        let hi = w.end - self.start + 1;
        &self.standardized[base + hi - self.spec.window..base + hi]
    }

    pub fn to_dataset(&self, windows: &[WindowRef], name: impl Into<String>) -> Dataset {
        Dataset {
            name: name.into(),
            samples: windows
                .iter()
                .map(|w| TimeSeries { values: self.window_values(w).to_vec(), label: w.label })
                .collect(),
            n_classes: 2,
            class_names: vec!["0".into(), "1".into()],
        }
    }
}

/// Cut a returns panel into study periods with standardized, labelled
/// windows. Statistics come from train days only. Windows touching a missing
/// return (including the label day) are skipped.
pub fn make_financial_splits(panel: &ReturnsPanel, spec: &SplitSpec) -> Result<Vec<FinancialSplit>> {
    spec.validate()?;
    if panel.days() < spec.split_len {
        return Err(Error::domain(format!(
            "panel spans {} days, a study period needs {}",
            panel.days(),
            spec.split_len
        )));
    }
    let medians: Vec<Option<f64>> = (0..panel.days()).map(|d| panel.daily_median(d)).collect();
    spec.starts(panel.days())
        .into_iter()
        .enumerate()
        .map(|(index, start)| build_split(panel, spec, &medians, index, start))
        .collect()
}

fn build_split(
    panel: &ReturnsPanel,
    spec: &SplitSpec,
    medians: &[Option<f64>],
    index: usize,
    start: usize,
) -> Result<FinancialSplit> {
    let train_end = start + spec.train_len;
    let train_values: Vec<f64> = (start..train_end).flat_map(|d| panel.day_returns(d).map(|(_, r)| r)).collect();
    if train_values.is_empty() {
        return Err(Error::domain(format!("split {index} has no train returns")));
    }
    let (mean, std) = mean_std(&train_values);
    if std == 0.0 {
        return Err(Error::domain(format!("split {index} has zero train-set volatility")));
    }
    let stats = TrainStats { mean, std, count: train_values.len() };

    let s_count = panel.stocks();
    let mut standardized = vec![0.0; s_count * spec.split_len];
    for s in 0..s_count {
        for k in 0..spec.split_len {
            if let Some(r) = panel.get(start + k, s) {
                standardized[s * spec.split_len + k] = (r - mean) / std;
            }
        }
    }

    // gaps[s][k] = missing days among start..start+k, for O(1) completeness checks
    let gaps: Vec<Vec<usize>> = (0..s_count)
        .map(|s| {
            let mut acc = vec![0; spec.split_len + 1];
            for k in 0..spec.split_len {
                acc[k + 1] = acc[k] + usize::from(panel.get(start + k, s).is_none());
            }
            acc
        })
        .collect();
    let windows = |first_end: usize, last_end: usize| -> Vec<WindowRef> {
        let mut out = Vec::new();
        for (s, g) in gaps.iter().enumerate() {
            for end in (first_end..=last_end).step_by(spec.window_stride) {
                let label_day = end + 1;
                let (lo, hi) = (end + 1 - spec.window - start, label_day + 1 - start);
                if g[hi] != g[lo] {
                    continue;
                }
                let (Some(r), Some(m)) = (panel.get(label_day, s), medians[label_day]) else { continue };
                out.push(WindowRef { stock: s, end, label: usize::from(r > m) });
            }
        }
        out
    };
    let train = windows(start + spec.window - 1, train_end - 2);
    let test = windows(train_end - 1, start + spec.split_len - 2);
    Ok(FinancialSplit { index, start, spec: *spec, stats, train, test, standardized })
}

/// Factor model for synthetic returns:
/// `r[t,s] = drift[s] + beta[s] * market[t] + e[t,s]`, with
/// `e[t,s] = -reversal * e[t-1,s] + idio_vol * z`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub stocks: usize,
    pub days: usize,
    pub market_vol: f64,
    pub idio_vol: f64,
    /// Short-term reversal coefficient of the idiosyncratic component.
    pub reversal: f64,
    /// Per-stock drifts; if `None`, drawn from `N(0, drift_sd)`.
    pub drifts: Option<Vec<f64>>,
    pub drift_sd: f64,
    pub beta_sd: f64,
}

impl SynthConfig {
    pub fn new(stocks: usize, days: usize) -> Self {
        Self {
            stocks,
            days,
            market_vol: 0.01,
            idio_vol: 0.015,
            reversal: 0.1,
            drifts: None,
            drift_sd: 2e-4,
            beta_sd: 0.2,
        }
    }
}

pub fn synth_returns(stocks: usize, days: usize, seed: u64) -> Result<ReturnsPanel> {
    synth_returns_with(&SynthConfig::new(stocks, days), seed)
}

pub fn synth_returns_with(cfg: &SynthConfig, seed: u64) -> Result<ReturnsPanel> {
    if cfg.stocks < 2 || cfg.days < 2 {
        return Err(Error::domain("synthetic panel needs at least 2 stocks and 2 days"));
    }
    let bad = |v: f64| !(v.is_finite() && v >= 0.0);
    if bad(cfg.market_vol) || bad(cfg.idio_vol) || bad(cfg.drift_sd) || bad(cfg.beta_sd) {
        return Err(Error::domain("volatilities must be finite and non-negative"));
    }
    let stream = RngStream::new(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let drifts: Vec<f64> = match &cfg.drifts {
        Some(d) if d.len() == cfg.stocks => d.clone(),
        Some(d) => return Err(Error::shape(format!("{} drifts for {} stocks", d.len(), cfg.stocks))),
        None => {
            let mut rng = stream.transform(1).rng();
            (0..cfg.stocks).map(|_| cfg.drift_sd * std_normal.sample(&mut rng)).collect()
        }
    };
    let betas: Vec<f64> = {
        let mut rng = stream.transform(2).rng();
        (0..cfg.stocks).map(|_| 1.0 + cfg.beta_sd * std_normal.sample(&mut rng)).collect()
    };
    let mut market_rng = stream.transform(3).rng();
    let mut idio_rng = stream.transform(4).rng();
    let mut prev = vec![0.0; cfg.stocks];
    let mut returns = Vec::with_capacity(cfg.days * cfg.stocks);
    for _ in 0..cfg.days {
        let market = cfg.market_vol * std_normal.sample(&mut market_rng);
        for s in 0..cfg.stocks {
            let e = -cfg.reversal * prev[s] + cfg.idio_vol * std_normal.sample(&mut idio_rng);
            prev[s] = e;
            returns.push(drifts[s] + betas[s] * market + e);
        }
    }
    let tickers = (0..cfg.stocks).map(|s| format!("S{s:03}")).collect();
    let present = vec![true; returns.len()];
    ReturnsPanel::new(business_days(cfg.days), tickers, returns, present)
}

/// Two-class toy set: noisy sine waves (label 0) against noisy sawtooth waves
/// (label 1), random phase, `period` steps per cycle. Classes alternate.
pub fn sine_vs_sawtooth(n: usize, len: usize, period: f64, noise: f64, seed: u64) -> Result<Dataset> {
    if len < 2 || !(period > 0.0) || !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::domain("need len >= 2, period > 0 and finite noise >= 0"));
    }
    let noise_dist = Normal::new(0.0, 1.0).expect("unit normal");
    let samples = (0..n)
        .map(|i| {
            let mut rng = RngStream::new(seed).sample(i as u64).rng();
            let label = i % 2;
            let phase: f64 = rand::Rng::random_range(&mut rng, 0.0..1.0);
            let values = (0..len)
                .map(|t| {
                    let u = t as f64 / period + phase;
                    let clean = if label == 0 {
                        (std::f64::consts::TAU * u).sin()
                    } else {
                        2.0 * (u - u.floor()) - 1.0
                    };
                    clean + noise * noise_dist.sample(&mut rng)
                })
                .collect();
            TimeSeries { values, label }
        })
        .collect();
    Dataset::new("sine_vs_sawtooth", samples, 2)
}

/// `n` consecutive weekdays starting 2000-01-03.
pub fn business_days(n: usize) -> Vec<NaiveDate> {
    let mut d = NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date");
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}
