use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::Tensor2;

/// Per-domain transform applied to base samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_id: usize,
    /// Rotation of the informative coordinates, radians.
    pub angle: f64,
    pub scale: f64,
    /// Additive offset of the informative coordinates.
    pub offset: Vec<f64>,
    /// Constant code written into the nuisance coordinates (before noise).
    pub nuisance_code: Vec<f64>,
    pub noise_sigma: f64,
}

impl DomainSpec {
    pub fn nuisance_dims(&self) -> usize {
        self.nuisance_code.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(LabError::Config(format!(
                "domain {} has non-invertible scale {}",
                self.domain_id, self.scale
            )));
        }
        if self.noise_sigma < 0.0 || !self.noise_sigma.is_finite() {
            return Err(LabError::Config(format!(
                "domain {} has invalid noise sigma {}",
                self.domain_id, self.noise_sigma
            )));
        }
        Ok(())
    }
}

/// Samples with category and domain labels. Sample ids are row indices.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub x: Tensor2,
    pub categories: Vec<usize>,
    pub domains: Vec<usize>,
    pub category_count: usize,
    /// All domains, sources and target together.
    pub domain_count: usize,
}

impl LabeledDataset {
    pub fn new(
        x: Tensor2,
        categories: Vec<usize>,
        domains: Vec<usize>,
        category_count: usize,
        domain_count: usize,
    ) -> Result<Self> {
        let ds = LabeledDataset {
            x,
            categories,
            domains,
            category_count,
            domain_count,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn input_dim(&self) -> usize {
        self.x.cols()
    }

    /// Source-domain count once one domain is held out.
    pub fn source_count(&self) -> usize {
        self.domain_count.saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x.rows();
        if self.categories.len() != n || self.domains.len() != n {
            return Err(LabError::Dimension {
                op: "dataset labels",
                left: self.x.shape(),
                right: (self.categories.len(), self.domains.len()),
            });
        }
        if let Some(&c) = self.categories.iter().find(|&&c| c >= self.category_count) {
            return Err(LabError::Label {
                label: c,
                classes: self.category_count,
            });
        }
        if let Some(&d) = self.domains.iter().find(|&&d| d >= self.domain_count) {
            return Err(LabError::Label {
                label: d,
                classes: self.domain_count,
            });
        }
        Ok(())
    }

    /// Row ids belonging to domain `d`, in dataset order.
    pub fn domain_ids(&self, d: usize) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.domains[i] == d).collect()
    }

    /// True when every category occurs in every domain.
    pub fn categories_cover_domains(&self) -> bool {
        let mut seen = vec![vec![false; self.category_count]; self.domain_count];
        for (&c, &d) in self.categories.iter().zip(&self.domains) {
            seen[d][c] = true;
        }
        seen.iter().all(|row| row.iter().all(|&s| s))
    }

    /// CSV with header `x0,...,x{D-1},category,domain`, LF line endings.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| LabError::io(path, e))?;
        let mut w = BufWriter::new(file);
        let d = self.input_dim();
        let mut header: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        header.push("category".into());
        header.push("domain".into());
        let io = |e| LabError::io(path, e);
        writeln!(w, "{}", header.join(",")).map_err(io)?;
        for i in 0..self.len() {
            let mut line = String::new();
            for v in self.x.row(i) {
                // shortest representation that round-trips exactly
                line.push_str(&format!("{v:?},"));
            }
            line.push_str(&format!("{},{}", self.categories[i], self.domains[i]));
            writeln!(w, "{line}").map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Reads a CSV written by [`write_csv`](Self::write_csv). Label counts are
    /// taken as one past the largest label seen unless given.
    pub fn read_csv(
        path: &Path,
        category_count: Option<usize>,
        domain_count: Option<usize>,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| LabError::format(path, e))?;
        let headers = reader.headers().map_err(|e| LabError::format(path, e))?.clone();
        let cols = headers.len();
        if cols < 3
            || &headers[cols - 2] != "category"
            || &headers[cols - 1] != "domain"
            || (0..cols - 2).any(|j| headers[j] != format!("x{j}"))
        {
            return Err(LabError::format(
                path,
                "expected header x0,...,x{D-1},category,domain",
            ));
        }
        let d = cols - 2;
        let mut data = Vec::new();
        let mut categories = Vec::new();
        let mut domains = Vec::new();
        for (line, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| LabError::format(path, e))?;
            let bad = |what: &str| LabError::format(path, format!("row {}: bad {what}", line + 1));
            for j in 0..d {
                data.push(rec[j].trim().parse::<f64>().map_err(|_| bad("feature"))?);
            }
            categories.push(rec[d].trim().parse::<usize>().map_err(|_| bad("category"))?);
            domains.push(rec[d + 1].trim().parse::<usize>().map_err(|_| bad("domain"))?);
        }
        let n = categories.len();
        let x = Tensor2::from_vec(n, d, data)?;
        let cc = category_count.unwrap_or_else(|| categories.iter().max().map_or(0, |m| m + 1));
        let dc = domain_count.unwrap_or_else(|| domains.iter().max().map_or(0, |m| m + 1));
        LabeledDataset::new(x, categories, domains, cc, dc)
    }
}
