//! Multi-label datasets: sign labels in {-1,+1}, dense feature vectors, a
//! sparse text interchange format, seeded synthesis from a low-rank ground
//! truth, and deterministic train/val/test splitting.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::l2_norm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub fn name(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }

    pub fn from_name(name: &str) -> Result<Split> {
        match name {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidArgument(format!("unknown split `{}`", name))),
        }
    }
}

/// One instance: feature vector `x` and a sign-label vector `y` whose
/// entries are exactly -1.0 or +1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub x: Array1<f64>,
    pub y: Array1<f64>,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub d: usize,
    pub m: usize,
    /// Input norm cap: synthesis and `normalize` guarantee `||x|| <= mu_x`;
    /// after a plain load it is the maximum observed norm.
    pub mu_x: f64,
    /// Seed recorded at synthesis time (0 for loaded files).
    pub seed: u64,
    instances: Vec<Instance>,
    splits: Vec<Split>,
}

impl Dataset {
    /// Builds a dataset after validating dimensions and label signs.
    /// All instances start in the train split.
    pub fn new(d: usize, m: usize, instances: Vec<Instance>, seed: u64) -> Result<Dataset> {
        if d == 0 || m == 0 {
            return Err(Error::InvalidArgument(format!(
                "dimensions must be positive, got d={} m={}",
                d, m
            )));
        }
        if instances.is_empty() {
            return Err(Error::EmptyInput("dataset has no instances".into()));
        }
        let mut mu_x = 0.0f64;
        for (i, inst) in instances.iter().enumerate() {
            if inst.x.len() != d {
                return Err(Error::InvalidArgument(format!(
                    "instance {} has {} features, expected {}",
                    i,
                    inst.x.len(),
                    d
                )));
            }
            if inst.y.len() != m {
                return Err(Error::InvalidArgument(format!(
                    "instance {} has {} labels, expected {}",
                    i,
                    inst.y.len(),
                    m
                )));
            }
            if inst.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "instance {} has a non-finite feature",
                    i
                )));
            }
            if inst.y.iter().any(|v| *v != 1.0 && *v != -1.0) {
                return Err(Error::InvalidArgument(format!(
                    "instance {} has a label outside {{-1,+1}}",
                    i
                )));
            }
            mu_x = mu_x.max(l2_norm(&inst.x));
        }
        let n = instances.len();
        Ok(Dataset { d, m, mu_x, seed, instances, splits: vec![Split::Train; n] })
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn instance(&self, i: usize) -> &Instance {
        &self.instances[i]
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn split_of(&self, i: usize) -> Split {
        self.splits[i]
    }

    /// Indices belonging to `split`, in dataset order.
    pub fn indices(&self, split: Split) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.splits[i] == split).collect()
    }

    pub fn split_counts(&self) -> (usize, usize, usize) {
        let mut c = (0, 0, 0);
        for s in &self.splits {
            match s {
                Split::Train => c.0 += 1,
                Split::Val => c.1 += 1,
                Split::Test => c.2 += 1,
            }
        }
        c
    }
}

/// Draws a dataset from a rank-constrained linear ground truth.
///
/// The teacher is `W0 = U·V` with Gaussian factors (`U` is `d x rank`, `V`
/// is `rank x m`); inputs are Gaussian directions normalized to norm 1
/// (so `mu_x = 1`); labels are `sign(xᵀW0 + noise)`, where the noise blends
/// a per-label and a shared component with weight `label_corr`. A score of
/// exactly zero yields +1. Returns the dataset and the teacher matrix.
pub fn synthesize(
    n: usize,
    d: usize,
    m: usize,
    rank: usize,
    label_corr: f64,
    noise: f64,
    seed: u64,
) -> Result<(Dataset, Array2<f64>)> {
    if n == 0 {
        return Err(Error::EmptyInput("cannot synthesize an empty dataset".into()));
    }
    if d == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!(
            "dimensions must be positive, got d={} m={}",
            d, m
        )));
    }
    if rank == 0 || rank > d.min(m) {
        return Err(Error::InvalidArgument(format!(
            "rank must lie in 1..=min(d,m)={}, got {}",
            d.min(m),
            rank
        )));
    }
    if !(0.0..=1.0).contains(&label_corr) {
        return Err(Error::InvalidArgument(format!(
            "label_corr must lie in [0,1], got {}",
            label_corr
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::InvalidArgument(format!("noise must be >= 0, got {}", noise)));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u = Array2::from_shape_fn((d, rank), |_| rng.sample::<f64, _>(StandardNormal));
    let v = Array2::from_shape_fn((rank, m), |_| rng.sample::<f64, _>(StandardNormal));
    let w0 = u.dot(&v);

    let shared_w = label_corr.sqrt();
    let own_w = (1.0 - label_corr).sqrt();
    let mut instances = Vec::with_capacity(n);
    for _ in 0..n {
        let mut x;
        loop {
            x = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
            let norm = l2_norm(&x);
            if norm > 0.0 {
                x.mapv_inplace(|a| a / norm);
                break;
            }
        }
        let scores = x.dot(&w0);
        let shared: f64 = rng.sample(StandardNormal);
        let y = Array1::from_shape_fn(m, |j| {
            let own: f64 = rng.sample(StandardNormal);
            let z = scores[j] + noise * (own_w * own + shared_w * shared);
            if z >= 0.0 {
                1.0
            } else {
                -1.0
            }
        });
        instances.push(Instance { x, y });
    }
    let mut ds = Dataset::new(d, m, instances, seed)?;
    ds.mu_x = 1.0;
    Ok((ds, w0))
}

/// Reassigns split tags with a seeded shuffle. Fractions must be
/// non-negative and sum to 1; counts follow largest-remainder rounding, so
/// they match the fractions within one instance and the largest fraction
/// wins leftover instances.
pub fn split(ds: &mut Dataset, fractions: (f64, f64, f64), seed: u64) -> Result<()> {
    let f = [fractions.0, fractions.1, fractions.2];
    if f.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "split fractions must be non-negative, got {:?}",
            f
        )));
    }
    let sum: f64 = f.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "split fractions must sum to 1, got {}",
            sum
        )));
    }
    let n = ds.len();
    let mut counts = [0usize; 3];
    let mut remainders = [(0.0f64, 0usize); 3];
    let mut assigned = 0usize;
    for i in 0..3 {
        let exact = f[i] * n as f64;
        counts[i] = exact.floor() as usize;
        remainders[i] = (exact - exact.floor(), i);
        assigned += counts[i];
    }
    // Largest remainder first; ties fall to the earlier split.
    remainders.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let mut left = n - assigned;
    for (_, idx) in remainders.iter() {
        if left == 0 {
            break;
        }
        counts[*idx] += 1;
        left -= 1;
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    for (pos, &i) in order.iter().enumerate() {
        ds.splits[i] = if pos < counts[0] {
            Split::Train
        } else if pos < counts[0] + counts[1] {
            Split::Val
        } else {
            Split::Test
        };
    }
    Ok(())
}

/// Rescales any instance with `||x|| > mu_x` down to exactly `mu_x` and
/// records the cap.
pub fn normalize(ds: &mut Dataset, mu_x: f64) -> Result<()> {
    if !(mu_x > 0.0 && mu_x.is_finite()) {
        return Err(Error::InvalidArgument(format!("mu_x must be positive, got {}", mu_x)));
    }
    for inst in ds.instances.iter_mut() {
        let norm = l2_norm(&inst.x);
        if norm > mu_x {
            let scale = mu_x / norm;
            inst.x.mapv_inplace(|a| a * scale);
        }
    }
    ds.mu_x = mu_x;
    Ok(())
}

/// Loads the sparse text format:
///
/// ```text
/// #mlatk d=<d> m=<m>
/// lbl[,lbl...] idx:val [idx:val...]
/// - idx:val ...
/// ```
///
/// The header is mandatory. `-` marks an empty positive-label list, label
/// and feature indices are 0-based, `#` starts a comment line, blank lines
/// are skipped with a warning. Listed labels are +1, all others -1.
pub fn load_sparse(path: impl AsRef<Path>) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    parse_sparse(BufReader::new(file))
}

pub fn parse_sparse<R: BufRead>(reader: R) -> Result<Dataset> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(line) => line?,
        None => return Err(Error::Parse { line: 1, message: "missing #mlatk header".into() }),
    };
    let (d, m) = parse_header(&header)?;

    let mut instances = Vec::new();
    for (idx, line) in lines.enumerate() {
        let lineno = idx + 2;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            log::warn!("skipping blank line {}", lineno);
            continue;
        }
        if trimmed.starts_with('#') {
            continue;
        }
        instances.push(parse_instance(trimmed, d, m, lineno)?);
    }
    if instances.is_empty() {
        return Err(Error::EmptyInput("sparse file contains no instances".into()));
    }
    Dataset::new(d, m, instances, 0)
}

fn parse_header(line: &str) -> Result<(usize, usize)> {
    let mut tokens = line.split_whitespace();
    if tokens.next() != Some("#mlatk") {
        return Err(Error::Parse {
            line: 1,
            message: "first line must be `#mlatk d=<d> m=<m>`".into(),
        });
    }
    let mut d = None;
    let mut m = None;
    for tok in tokens {
        if let Some(v) = tok.strip_prefix("d=") {
            d = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad d value `{}`", v),
            })?);
        } else if let Some(v) = tok.strip_prefix("m=") {
            m = Some(v.parse::<usize>().map_err(|_| Error::Parse {
                line: 1,
                message: format!("bad m value `{}`", v),
            })?);
        } else {
            return Err(Error::Parse { line: 1, message: format!("unknown header token `{}`", tok) });
        }
    }
    match (d, m) {
        (Some(d), Some(m)) if d > 0 && m > 0 => Ok((d, m)),
        (Some(_), Some(_)) => {
            Err(Error::Parse { line: 1, message: "d and m must be positive".into() })
        }
        _ => Err(Error::Parse { line: 1, message: "header must carry d= and m=".into() }),
    }
}

fn parse_instance(line: &str, d: usize, m: usize, lineno: usize) -> Result<Instance> {
    let mut tokens = line.split_whitespace();
    let label_tok = tokens.next().expect("non-empty line has a first token");

    let mut y = Array1::from_elem(m, -1.0);
    if label_tok != "-" {
        for part in label_tok.split(',') {
            let lbl: usize = part.parse().map_err(|_| Error::Parse {
                line: lineno,
                message: format!("bad label `{}`", part),
            })?;
            if lbl >= m {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("label {} out of range (m={})", lbl, m),
                });
            }
            if y[lbl] == 1.0 {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("duplicate label {}", lbl),
                });
            }
            y[lbl] = 1.0;
        }
    }

    let mut x = Array1::zeros(d);
    let mut seen = vec![false; d];
    for tok in tokens {
        let (idx_s, val_s) = tok.split_once(':').ok_or_else(|| Error::Parse {
            line: lineno,
            message: format!("feature `{}` is not idx:val", tok),
        })?;
        let idx: usize = idx_s.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad feature index `{}`", idx_s),
        })?;
        if idx >= d {
            return Err(Error::Parse {
                line: lineno,
                message: format!("feature index {} out of range (d={})", idx, d),
            });
        }
        if seen[idx] {
            return Err(Error::Parse {
                line: lineno,
                message: format!("duplicate feature index {}", idx),
            });
        }
        seen[idx] = true;
        let val: f64 = val_s.parse().map_err(|_| Error::Parse {
            line: lineno,
            message: format!("bad feature value `{}`", val_s),
        })?;
        if !val.is_finite() {
            return Err(Error::Parse {
                line: lineno,
                message: format!("non-finite feature value `{}`", val_s),
            });
        }
        x[idx] = val;
    }
    Ok(Instance { x, y })
}

/// Writes the sparse text format in canonical form: ascending label and
/// feature indices, exact zeros dropped, shortest round-trip float text.
/// Loading the result reproduces every stored value.
pub fn save_sparse(ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    write_sparse(ds, &mut file)
}

pub fn write_sparse<W: Write>(ds: &Dataset, out: &mut W) -> Result<()> {
    writeln!(out, "#mlatk d={} m={}", ds.d, ds.m)?;
    for inst in ds.instances() {
        let labels: Vec<String> =
            (0..ds.m).filter(|&j| inst.y[j] > 0.0).map(|j| j.to_string()).collect();
        if labels.is_empty() {
            write!(out, "-")?;
        } else {
            write!(out, "{}", labels.join(","))?;
        }
        for i in 0..ds.d {
            if inst.x[i] != 0.0 {
                write!(out, " {}:{}", i, inst.x[i])?;
            }
        }
        writeln!(out)?;
    }
    Ok(())
}
