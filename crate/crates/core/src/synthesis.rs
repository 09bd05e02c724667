//! Synthesis `S_ψ: x ↦ Σ x_k ψ_k` and coordinate `T_ψ` operators for a
//! finite surrogate `ℝ^M` of the target space, and OM push-forward through
//! isometric bases.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Orthonormality tolerance for loaded matrices.
pub const ORTHONORMAL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum BasisKind {
    Identity { dim: usize },
    /// Columns are the basis vectors.
    Matrix(DMatrix<f64>),
    /// `ℝ^dim` placed in the first `dim` coordinates of `ℝ^ambient`.
    EmbeddedIdentity { ambient: usize, dim: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    kind: BasisKind,
    isometry_certified: bool,
}

fn orthonormality_defect(m: &DMatrix<f64>) -> f64 {
    let g = m.transpose() * m;
    let eye = DMatrix::<f64>::identity(m.ncols(), m.ncols());
    (g - eye).abs().max()
}

impl Basis {
    pub fn identity(dim: usize) -> Self {
        Self {
            kind: BasisKind::Identity { dim },
            isometry_certified: true,
        }
    }

    pub fn embedded(ambient: usize, dim: usize) -> Result<Self> {
        if dim > ambient {
            return Err(Error::param("dim", "cannot exceed the ambient dimension"));
        }
        Ok(Self {
            kind: BasisKind::EmbeddedIdentity { ambient, dim },
            isometry_certified: true,
        })
    }

    /// A square invertible matrix; certified isometric when its columns are
    /// orthonormal to [`ORTHONORMAL_TOL`].
    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() == 0 {
            return Err(Error::param("basis", "matrix must be square and non-empty"));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("basis", "entries must be finite"));
        }
        if m.clone().lu().determinant() == 0.0 {
            return Err(Error::param("basis", "matrix is singular"));
        }
        let iso = orthonormality_defect(&m) <= ORTHONORMAL_TOL;
        Ok(Self {
            kind: BasisKind::Matrix(m),
            isometry_certified: iso,
        })
    }

    /// An orthonormal matrix; rejects anything that is not.
    pub fn orthonormal(m: DMatrix<f64>) -> Result<Self> {
        let b = Self::from_matrix(m)?;
        if !b.isometry_certified {
            return Err(Error::param("basis", "columns are not orthonormal to 1e-12"));
        }
        Ok(b)
    }

    /// Parse a comma-separated matrix (one row per line; `#` comments).
    pub fn parse_csv(text: &str) -> Result<DMatrix<f64>> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row = line
                .split(',')
                .map(|c| c.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::param("basis", format!("line {}: {e}", i + 1)))?;
            rows.push(row);
        }
        let n = rows.len();
        if n == 0 || rows.iter().any(|r| r.len() != rows[0].len()) {
            return Err(Error::param("basis", "ragged or empty matrix"));
        }
        Ok(DMatrix::from_fn(n, rows[0].len(), |i, j| rows[i][j]))
    }

    pub fn kind(&self) -> &BasisKind {
        &self.kind
    }

    pub fn isometry_certified(&self) -> bool {
        self.isometry_certified
    }

    /// Coordinate dimension.
    pub fn dim(&self) -> usize {
        match &self.kind {
            BasisKind::Identity { dim } | BasisKind::EmbeddedIdentity { dim, .. } => *dim,
            BasisKind::Matrix(m) => m.ncols(),
        }
    }

    /// Dimension of the target space.
    pub fn ambient_dim(&self) -> usize {
        match &self.kind {
            BasisKind::Identity { dim } => *dim,
            BasisKind::EmbeddedIdentity { ambient, .. } => *ambient,
            BasisKind::Matrix(m) => m.nrows(),
        }
    }

    /// `z = Ψ x`.
    pub fn synthesize(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::param("x", format!("expected length {}", self.dim())));
        }
        Ok(match &self.kind {
            BasisKind::Identity { .. } => x.to_vec(),
            BasisKind::EmbeddedIdentity { ambient, .. } => {
                let mut z = x.to_vec();
                z.resize(*ambient, 0.0);
                z
            }
            BasisKind::Matrix(m) => (m * DVector::from_column_slice(x)).as_slice().to_vec(),
        })
    }

    /// Left inverse of [`Self::synthesize`].
    pub fn coordinates(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.ambient_dim() {
            return Err(Error::param("z", format!("expected length {}", self.ambient_dim())));
        }
        Ok(match &self.kind {
            BasisKind::Identity { .. } => z.to_vec(),
            BasisKind::EmbeddedIdentity { dim, .. } => z[..*dim].to_vec(),
            BasisKind::Matrix(m) => {
                let zv = DVector::from_column_slice(z);
                let x = if self.isometry_certified {
                    m.transpose() * zv
                } else {
                    m.clone()
                        .lu()
                        .solve(&zv)
                        .ok_or_else(|| Error::Numerical("basis solve failed".into()))?
                };
                x.as_slice().to_vec()
            }
        })
    }

    /// Whether `z` lies in the range of `S_ψ` (exact zero test outside the
    /// embedded block).
    pub fn in_range(&self, z: &[f64]) -> bool {
        match &self.kind {
            BasisKind::EmbeddedIdentity { dim, .. } => z[*dim..].iter().all(|v| *v == 0.0),
            _ => true,
        }
    }
}

/// `h ↦ I(T_ψ h)` on the range of `S_ψ`, `+∞` off it. Refuses bases not
/// certified isometric: OM functionals do not transport through merely
/// equivalent norms.
pub fn pushforward_om<F>(om: F, basis: &Basis) -> Result<impl Fn(&[f64]) -> f64 + '_>
where
    F: Fn(&[f64]) -> f64 + 'static,
{
    if !basis.isometry_certified() {
        return Err(Error::hypothesis(
            "basis is not certified isometric; the OM functional does not transport",
        ));
    }
    Ok(move |z: &[f64]| {
        if z.len() != basis.ambient_dim() || !basis.in_range(z) {
            return f64::INFINITY;
        }
        match basis.coordinates(z) {
            Ok(x) => om(&x),
            Err(_) => f64::INFINITY,
        }
    })
}
