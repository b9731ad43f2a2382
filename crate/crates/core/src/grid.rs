//! Uniform periodic grids on the unit torus `[0,1)ⁿ` and their derivative
//! operators.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// How spatial derivatives are discretized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DiffScheme {
    /// 5-point central differences.
    #[default]
    FourthOrder,
    /// Fourier differentiation (exact for resolved modes).
    Spectral,
}

/// Tensor grid with `nu` points per direction on `[0,1)ⁿ`, index
/// `j = Σ_d i_d · nu^d` (first direction fastest).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PeriodicGrid {
    pub dims: usize,
    pub nu: usize,
}

impl PeriodicGrid {
    pub fn new(dims: usize, nu: usize) -> Result<Self> {
        if dims == 0 {
            return Err(Error::InvalidArgument("periodic grid needs at least one direction".into()));
        }
        if nu < 5 {
            return Err(Error::InvalidArgument(format!(
                "periodic grid needs at least 5 points per direction, got {nu}"
            )));
        }
        Ok(Self { dims, nu })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nu.pow(self.dims as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn h(&self) -> f64 {
        1.0 / self.nu as f64
    }

    #[inline]
    pub fn stride(&self, dir: usize) -> usize {
        self.nu.pow(dir as u32)
    }

    pub fn multi_index(&self, mut j: usize) -> Vec<usize> {
        (0..self.dims)
            .map(|_| {
                let i = j % self.nu;
                j /= self.nu;
                i
            })
            .collect()
    }

    /// Coordinates `u ∈ [0,1)ⁿ` of point `j`.
    pub fn coords(&self, j: usize) -> Vec<f64> {
        self.multi_index(j).into_iter().map(|i| i as f64 * self.h()).collect()
    }

    /// Index of the neighbour `shift` steps along `dir` (periodic wrap).
    #[inline]
    pub fn shifted(&self, j: usize, dir: usize, shift: isize) -> usize {
        let s = self.stride(dir);
        let i = (j / s) % self.nu;
        let k = (i as isize + shift).rem_euclid(self.nu as isize) as usize;
        j - i * s + k * s
    }

    /// Start indices of all grid lines along `dir`.
    fn line_starts(&self, dir: usize) -> impl Iterator<Item = usize> + '_ {
        let s = self.stride(dir);
        (0..self.len()).filter(move |j| (j / s) % self.nu == 0)
    }

    /// First derivative of a scalar field along `dir`.
    pub fn d1(&self, f: &[f64], dir: usize, scheme: DiffScheme) -> Vec<f64> {
        self.apply(f, dir, scheme, 1)
    }

    /// Second derivative of a scalar field along `dir`.
    pub fn d2(&self, f: &[f64], dir: usize, scheme: DiffScheme) -> Vec<f64> {
        self.apply(f, dir, scheme, 2)
    }

    fn apply(&self, f: &[f64], dir: usize, scheme: DiffScheme, order: u32) -> Vec<f64> {
        assert_eq!(f.len(), self.len(), "field length must match grid");
        assert!(dir < self.dims, "direction out of range");
        let mut out = vec![0.0; f.len()];
        let s = self.stride(dir);
        let nu = self.nu;
        let spectral = match scheme {
            DiffScheme::Spectral => Some(SpectralLine::new(nu)),
            DiffScheme::FourthOrder => None,
        };
        let mut line = vec![0.0; nu];
        for start in self.line_starts(dir) {
            for (i, x) in line.iter_mut().enumerate() {
                *x = f[start + i * s];
            }
            let d = match &spectral {
                Some(sp) => sp.derivative(&line, order),
                None => fourth_order_line(&line, self.h(), order),
            };
            for (i, x) in d.into_iter().enumerate() {
                out[start + i * s] = x;
            }
        }
        out
    }
}

/// 4th-order central differences on a periodic line.
pub fn fourth_order_line(f: &[f64], h: f64, order: u32) -> Vec<f64> {
    let n = f.len();
    let at = |i: isize| f[i.rem_euclid(n as isize) as usize];
    (0..n as isize)
        .map(|i| match order {
            1 => (-at(i + 2) + 8.0 * at(i + 1) - 8.0 * at(i - 1) + at(i - 2)) / (12.0 * h),
            2 => {
                (-at(i + 2) + 16.0 * at(i + 1) - 30.0 * at(i) + 16.0 * at(i - 1) - at(i - 2))
                    / (12.0 * h * h)
            }
            _ => unreachable!("only first and second derivatives are supported"),
        })
        .collect()
}

/// Fourier differentiation of a periodic line of unit length.
pub struct SpectralLine {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl SpectralLine {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self { n, fwd: planner.plan_fft_forward(n), inv: planner.plan_fft_inverse(n) }
    }

    pub fn derivative(&self, f: &[f64], order: u32) -> Vec<f64> {
        let n = self.n;
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.fwd.process(&mut buf);
        for (k, c) in buf.iter_mut().enumerate() {
            let kk = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            // The Nyquist mode has no well-defined odd derivative.
            if n % 2 == 0 && k == n / 2 && order % 2 == 1 {
                *c = Complex64::new(0.0, 0.0);
                continue;
            }
            let ik = Complex64::new(0.0, 2.0 * std::f64::consts::PI * kk);
            *c *= ik.powu(order);
        }
        self.inv.process(&mut buf);
        buf.iter().map(|c| c.re / n as f64).collect()
    }
}
