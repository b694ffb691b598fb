//! Spreading-sequence books, effective channels `g = u ⊗ h` and the
//! residual interference-plus-noise covariance of a receiver that stacks the
//! N chips of every symbol into one MN-dimensional observation.

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, CVec, C64};

/// A set of length-N sequences with ‖u‖² = N.
#[derive(Debug, Clone, PartialEq)]
pub struct SpreadingBook {
    sequences: Vec<CVec>,
}

impl SpreadingBook {
    /// Rows of the Sylvester–Hadamard matrix of order `n` (a power of two).
    pub fn hadamard(n: usize) -> Result<Self> {
        if n == 0 || !n.is_power_of_two() {
            return Err(Error::domain(format!("Hadamard book needs a power-of-two length, got {n}")));
        }
        let sequences = (0..n)
            .map(|row| {
                CVec::from_fn(n, |col, _| {
                    // H[row, col] = (-1)^{popcount(row & col)}
                    if (row & col).count_ones() % 2 == 0 {
                        linalg::ONE
                    } else {
                        -linalg::ONE
                    }
                })
            })
            .collect();
        Ok(Self { sequences })
    }

    /// Columns of the unitary N-point DFT scaled by √N.
    pub fn dft(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("DFT book needs a positive length"));
        }
        let sequences = (0..n)
            .map(|k| {
                CVec::from_fn(n, |t, _| {
                    let angle = -2.0 * std::f64::consts::PI * ((k * t) % n) as f64 / n as f64;
                    C64::from_polar(1.0, angle)
                })
            })
            .collect();
        Ok(Self { sequences })
    }

    /// Hadamard when `n` is a power of two, DFT otherwise.
    pub fn orthogonal(n: usize) -> Result<Self> {
        if n.is_power_of_two() {
            Self::hadamard(n)
        } else {
            Self::dft(n)
        }
    }

    /// Arbitrary sequences; each must have squared norm equal to its length.
    pub fn from_sequences(sequences: Vec<CVec>) -> Result<Self> {
        let n = sequences
            .first()
            .map(|s| s.len())
            .ok_or_else(|| Error::domain("spreading book is empty"))?;
        for (i, s) in sequences.iter().enumerate() {
            if s.len() != n {
                return Err(Error::dimension(format!("sequence {i} has length {}, expected {n}", s.len())));
            }
            let energy = s.norm_squared();
            if (energy - n as f64).abs() > 1e-9 * n as f64 {
                return Err(Error::domain(format!("sequence {i} has energy {energy}, expected {n}")));
            }
        }
        Ok(Self { sequences })
    }

    pub fn sequence_len(&self) -> usize {
        self.sequences[0].len()
    }

    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    pub fn sequence(&self, index: usize) -> &CVec {
        &self.sequences[index]
    }

    pub fn sequences(&self) -> &[CVec] {
        &self.sequences
    }

    /// Gram matrix `G[i,k] = u_iᴴ u_k`.
    pub fn gram(&self) -> CMat {
        let n = self.len();
        CMat::from_fn(n, n, |i, k| self.sequences[i].dotc(&self.sequences[k]))
    }

    /// True when the book is a full set of N mutually orthogonal sequences.
    pub fn is_orthogonal(&self) -> bool {
        let n = self.sequence_len();
        if self.len() != n {
            return false;
        }
        let gram = self.gram();
        let target = CMat::identity(n, n) * linalg::real(n as f64);
        (gram - target).iter().all(|z| z.norm() <= 1e-9 * n as f64)
    }
}

/// Which sequence of a book each UE uses, indexed like the scenario's UEs.
#[derive(Debug, Clone, PartialEq)]
pub struct Spreading {
    pub book: SpreadingBook,
    pub assignment: Vec<usize>,
}

impl Spreading {
    pub fn new(book: SpreadingBook, assignment: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&c| c >= book.len()) {
            return Err(Error::domain(format!("code index {bad} outside a book of {}", book.len())));
        }
        Ok(Self { book, assignment })
    }

    /// The N = 1 book `[1]` for every UE: classical transmission.
    pub fn trivial(ues: usize) -> Self {
        Self {
            book: SpreadingBook::hadamard(1).expect("order-1 book"),
            assignment: vec![0; ues],
        }
    }

    pub fn sequence_len(&self) -> usize {
        self.book.sequence_len()
    }

    pub fn code_of(&self, ue: usize) -> &CVec {
        self.book.sequence(self.assignment[ue])
    }
}

/// True and estimated effective channels of one UE at one BS.
#[derive(Debug, Clone, PartialEq)]
pub struct EffectiveChannel {
    pub g: CVec,
    pub g_hat: CVec,
}

impl EffectiveChannel {
    pub fn new(u: &CVec, h: &CVec, h_hat: &CVec) -> Self {
        Self {
            g: effective_channel(u, h),
            g_hat: effective_channel(u, h_hat),
        }
    }

    pub fn error(&self) -> CVec {
        &self.g - &self.g_hat
    }
}

/// `u ⊗ h`, length MN.
pub fn effective_channel(u: &CVec, h: &CVec) -> CVec {
    linalg::kron_vec(u, h)
}

/// The MN×M matrix `u ⊗ I_M`.
pub fn spreading_operator(u: &CVec, m: usize) -> CMat {
    linalg::kron(&CMat::from_column_slice(u.len(), 1, u.as_slice()), &CMat::identity(m, m))
}

/// `Z = Σ p (u uᴴ) ⊗ C + σ² I_MN` over every UE whose error covariance at
/// this BS is listed in `errors`.
pub fn build_z(spreading: &Spreading, powers: &[f64], errors: &[CMat], noise_power: f64) -> Result<CMat> {
    if errors.len() != powers.len() || errors.len() != spreading.assignment.len() {
        return Err(Error::dimension(format!(
            "{} error covariances, {} powers, {} code assignments",
            errors.len(),
            powers.len(),
            spreading.assignment.len()
        )));
    }
    let n = spreading.sequence_len();
    let m = errors.first().map(|c| c.nrows()).unwrap_or(0);
    let mut z = CMat::identity(m * n, m * n) * linalg::real(noise_power);
    for (ue, c) in errors.iter().enumerate() {
        if c.shape() != (m, m) {
            return Err(Error::dimension(format!("error covariance {ue} is {:?}, expected {m}x{m}", c.shape())));
        }
        let u = spreading.code_of(ue);
        let p = powers[ue];
        for a in 0..n {
            for b in 0..n {
                let s = u[a] * u[b].conj() * p;
                if s == linalg::ZERO {
                    continue;
                }
                let mut block = z.view_mut((a * m, b * m), (m, m));
                block += c * s;
            }
        }
    }
    Ok(z)
}
