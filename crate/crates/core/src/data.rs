//! Synthetic Gaussian-mixture datasets with analytically known Bayes-optimal
//! labels, and the CSV schema used by the CLI.
//!
//! CSV schema: header `id,f0..f{d-1},y_clean,y_star[,y_tilde,q]`, decimal
//! floats at 17 significant digits (lossless for f64), UTF-8, LF endings.

use crate::error::{CalError, Result};
use crate::matrix::Matrix;
use crate::rng::{self, substream};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;

/// One Gaussian component with a diagonal covariance.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassComponent {
    pub prior: f64,
    pub mean: Vec<f64>,
    /// Per-dimension variances (diagonal covariance).
    pub var: Vec<f64>,
}

/// Generator parameters for a mixture dataset.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<ClassComponent>,
    pub dim: usize,
    pub n: usize,
    pub seed: u64,
}

impl MixtureSpec {
    /// `k` unit-variance components with means evenly spaced on a circle of
    /// the given radius, equal priors. A convenient nontrivial default.
    pub fn ring(k: usize, dim: usize, radius: f64, n: usize, seed: u64) -> Self {
        let components = (0..k)
            .map(|c| {
                let angle = 2.0 * std::f64::consts::PI * c as f64 / k as f64;
                let mut mean = vec![0.0; dim];
                mean[0] = radius * angle.cos();
                if dim > 1 {
                    mean[1] = radius * angle.sin();
                }
                ClassComponent {
                    prior: 1.0 / k as f64,
                    mean,
                    var: vec![1.0; dim],
                }
            })
            .collect();
        MixtureSpec {
            components,
            dim,
            n,
            seed,
        }
    }

    pub fn num_classes(&self) -> usize {
        self.components.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.components.len() < 2 {
            return Err(CalError::invalid("need at least 2 components"));
        }
        let total: f64 = self.components.iter().map(|c| c.prior).sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CalError::invalid(format!("priors sum to {total}, not 1")));
        }
        for (i, c) in self.components.iter().enumerate() {
            if c.prior < 0.0 {
                return Err(CalError::invalid(format!("negative prior for class {i}")));
            }
            if c.mean.len() != self.dim || c.var.len() != self.dim {
                return Err(CalError::invalid(format!("class {i} dimension mismatch")));
            }
            if c.var.iter().any(|&v| v <= 0.0) {
                return Err(CalError::invalid(format!(
                    "class {i} has a degenerate covariance entry"
                )));
            }
        }
        Ok(())
    }

    /// Log joint density `ln(prior_c) + ln N(x; mean_c, var_c)` up to a
    /// shared constant.
    fn log_joint(&self, c: usize, x: &[f64]) -> f64 {
        let comp = &self.components[c];
        if comp.prior == 0.0 {
            return f64::NEG_INFINITY;
        }
        let mut ll = comp.prior.ln();
        for j in 0..self.dim {
            let d = x[j] - comp.mean[j];
            ll -= 0.5 * (d * d / comp.var[j] + comp.var[j].ln());
        }
        ll
    }

    /// Bayes-optimal class at `x`: argmax of the posterior, ties toward the
    /// smallest class index.
    pub fn bayes_label(&self, x: &[f64]) -> usize {
        let mut best = 0;
        let mut best_ll = self.log_joint(0, x);
        for c in 1..self.num_classes() {
            let ll = self.log_joint(c, x);
            if ll > best_ll {
                best_ll = ll;
                best = c;
            }
        }
        best
    }

    /// Full posterior vector at `x`.
    pub fn posterior(&self, x: &[f64]) -> Vec<f64> {
        let lls: Vec<f64> = (0..self.num_classes())
            .map(|c| self.log_joint(c, x))
            .collect();
        let max = lls.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lls.iter().map(|&l| (l - max).exp()).collect();
        let sum: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / sum).collect()
    }
}

/// Feature matrix plus clean, Bayes-optimal, and (optionally) noisy labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub features: Matrix,
    pub y_clean: Vec<usize>,
    pub y_star: Vec<usize>,
    pub y_tilde: Option<Vec<usize>>,
    /// Per-sample flip rates, present when noise has been injected.
    pub q: Option<Vec<f64>>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Labels used for training: noisy when present, clean otherwise.
    pub fn train_labels(&self) -> &[usize] {
        self.y_tilde.as_deref().unwrap_or(&self.y_clean)
    }

    /// Empirical marginal of the training labels.
    pub fn label_marginal(&self) -> Vec<f64> {
        let labels = self.train_labels();
        let mut m = vec![0.0; self.num_classes];
        for &y in labels {
            m[y] += 1.0;
        }
        for v in m.iter_mut() {
            *v /= labels.len() as f64;
        }
        m
    }
}

/// Sample a dataset from the mixture: class from the prior, feature from the
/// class Gaussian, Bayes label from the closed-form posterior.
pub fn gen_mixture(spec: &MixtureSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = substream(spec.seed, rng::stream::DATA);
    let std_normal = Normal::new(0.0, 1.0).expect("valid");
    let k = spec.num_classes();

    let mut features = Matrix::zeros(spec.n, spec.dim);
    let mut y_clean = Vec::with_capacity(spec.n);
    let mut y_star = Vec::with_capacity(spec.n);

    use rand::Rng as _;
    for i in 0..spec.n {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut class = k - 1;
        for (c, comp) in spec.components.iter().enumerate() {
            acc += comp.prior;
            if u < acc {
                class = c;
                break;
            }
        }
        let comp = &spec.components[class];
        let row = features.row_mut(i);
        for j in 0..spec.dim {
            row[j] = comp.mean[j] + comp.var[j].sqrt() * std_normal.sample(&mut rng);
        }
        y_clean.push(class);
        let label = spec.bayes_label(features.row(i));
        y_star.push(label);
    }

    Ok(Dataset {
        features,
        y_clean,
        y_star,
        y_tilde: None,
        q: None,
        num_classes: k,
    })
}

fn fmt_float(v: f64) -> String {
    // 17 significant digits round-trip any finite f64.
    format!("{v:.16e}")
}

/// Serialize to the documented CSV schema.
pub fn save_csv(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = String::new();
    let d = ds.dim();
    out.push_str("id");
    for j in 0..d {
        let _ = write!(out, ",f{j}");
    }
    out.push_str(",y_clean,y_star");
    let with_noise = ds.y_tilde.is_some();
    if with_noise {
        out.push_str(",y_tilde,q");
    }
    out.push('\n');
    for i in 0..ds.len() {
        let _ = write!(out, "{i}");
        for v in ds.features.row(i) {
            let _ = write!(out, ",{}", fmt_float(*v));
        }
        let _ = write!(out, ",{},{}", ds.y_clean[i], ds.y_star[i]);
        if with_noise {
            let q = ds.q.as_ref().map_or(0.0, |qs| qs[i]);
            let _ = write!(out, ",{},{}", ds.y_tilde.as_ref().unwrap()[i], fmt_float(q));
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn parse_field<T: std::str::FromStr>(s: &str, line: usize, what: &str) -> Result<T> {
    s.trim().parse().map_err(|_| CalError::Parse {
        line,
        msg: format!("cannot parse {what} from {s:?}"),
    })
}

/// Load a dataset written by [`save_csv`]. The noisy columns are optional.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(CalError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.first() != Some(&"id") {
        return Err(CalError::Parse {
            line: 1,
            msg: format!("expected header starting with id, got {header:?}"),
        });
    }
    let d = cols.iter().filter(|c| c.starts_with('f')).count();
    let expect_plain: Vec<String> = (0..d).map(|j| format!("f{j}")).collect();
    let mut expected = vec!["id".to_string()];
    expected.extend(expect_plain);
    expected.push("y_clean".into());
    expected.push("y_star".into());
    let with_noise = cols.len() == expected.len() + 2;
    if with_noise {
        expected.push("y_tilde".into());
        expected.push("q".into());
    }
    if cols != expected.iter().map(String::as_str).collect::<Vec<_>>() {
        return Err(CalError::Parse {
            line: 1,
            msg: format!("header mismatch: got {header:?}"),
        });
    }

    let mut rows = Vec::new();
    let mut y_clean = Vec::new();
    let mut y_star = Vec::new();
    let mut y_tilde = Vec::new();
    let mut q = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != expected.len() {
            return Err(CalError::Parse {
                line: lineno,
                msg: format!("expected {} fields, got {}", expected.len(), fields.len()),
            });
        }
        let mut row = Vec::with_capacity(d);
        for j in 0..d {
            row.push(parse_field::<f64>(fields[1 + j], lineno, "feature")?);
        }
        rows.push(row);
        y_clean.push(parse_field::<usize>(fields[1 + d], lineno, "y_clean")?);
        y_star.push(parse_field::<usize>(fields[2 + d], lineno, "y_star")?);
        if with_noise {
            y_tilde.push(parse_field::<usize>(fields[3 + d], lineno, "y_tilde")?);
            q.push(parse_field::<f64>(fields[4 + d], lineno, "q")?);
        }
    }

    let num_classes = y_clean
        .iter()
        .chain(y_star.iter())
        .chain(y_tilde.iter())
        .max()
        .map_or(2, |&m| (m + 1).max(2));
    Ok(Dataset {
        features: Matrix::from_rows(rows),
        y_clean,
        y_star,
        y_tilde: if with_noise { Some(y_tilde) } else { None },
        q: if with_noise { Some(q) } else { None },
        num_classes,
    })
}
