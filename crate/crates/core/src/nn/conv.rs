use rand::Rng;

use crate::error::{Error, Result};

use super::real::{gemm, MatRef};
use super::{init, ParamId, ParameterStore, Real, Tensor3};

/// Geometry of a "same"-padded 1D convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
}

impl ConvGeometry {
    pub fn new(in_channels: usize, out_channels: usize, kernel: usize, stride: usize) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::Config(format!("kernel must be odd, got {kernel}")));
        }
        if stride == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::Config("stride and channel counts must be positive".into()));
        }
        Ok(ConvGeometry {
            in_channels,
            out_channels,
            kernel,
            stride,
        })
    }

    /// `ceil(frames / stride)`.
    pub fn out_frames(&self, frames: usize) -> usize {
        frames.div_ceil(self.stride)
    }

    /// Zeros inserted before the first frame.
    fn pad_left(&self, frames: usize) -> usize {
        let needed = (self.out_frames(frames) - 1) * self.stride + self.kernel;
        needed.saturating_sub(frames) / 2
    }

    fn patch_len(&self) -> usize {
        self.in_channels * self.kernel
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1
    }

    /// Unfolds one `(in_channels, frames)` item into `(in_channels·kernel, out_frames)`.
    fn im2col<T: Real>(&self, x: &[T], frames: usize, col: &mut [T]) {
        let out = self.out_frames(frames);
        let pad = self.pad_left(frames) as isize;
        for ci in 0..self.in_channels {
            let src = &x[ci * frames..(ci + 1) * frames];
            for j in 0..self.kernel {
                let row = &mut col[(ci * self.kernel + j) * out..(ci * self.kernel + j + 1) * out];
                for (t, v) in row.iter_mut().enumerate() {
                    let pos = (t * self.stride) as isize + j as isize - pad;
                    *v = if pos >= 0 && (pos as usize) < frames {
                        src[pos as usize]
                    } else {
                        T::zero()
                    };
                }
            }
        }
    }

    fn col2im_add<T: Real>(&self, col: &[T], frames: usize, dx: &mut [T]) {
        let out = self.out_frames(frames);
        let pad = self.pad_left(frames) as isize;
        for ci in 0..self.in_channels {
            let dst = &mut dx[ci * frames..(ci + 1) * frames];
            for j in 0..self.kernel {
                let row = &col[(ci * self.kernel + j) * out..(ci * self.kernel + j + 1) * out];
                for (t, &v) in row.iter().enumerate() {
                    let pos = (t * self.stride) as isize + j as isize - pad;
                    if pos >= 0 && (pos as usize) < frames {
                        dst[pos as usize] += v;
                    }
                }
            }
        }
    }
}

/// Convolution of `x` with weights laid out `(out, in, kernel)`.
pub fn conv1d_forward<T: Real>(x: &Tensor3<T>, weight: &[T], geom: ConvGeometry) -> Result<Tensor3<T>> {
    x.expect_shape("conv1d input", geom.in_channels)?;
    if weight.len() != geom.out_channels * geom.patch_len() {
        return Err(Error::Shape(format!(
            "conv1d weight has {} values, expected {}",
            weight.len(),
            geom.out_channels * geom.patch_len()
        )));
    }
    let [batch, _, frames] = x.shape();
    if frames == 0 {
        return Err(Error::Shape("conv1d input has no frames".into()));
    }
    let out = geom.out_frames(frames);
    let mut y = Tensor3::zeros(batch, geom.out_channels, out);
    let w = MatRef::rows(weight, geom.out_channels, geom.patch_len());
    let mut col = if geom.is_pointwise() {
        Vec::new()
    } else {
        vec![T::zero(); geom.patch_len() * out]
    };
    for b in 0..batch {
        let cols = if geom.is_pointwise() {
            MatRef::rows(x.item(b), geom.in_channels, frames)
        } else {
            geom.im2col(x.item(b), frames, &mut col);
            MatRef::rows(&col, geom.patch_len(), out)
        };
        gemm(T::one(), w, cols, T::zero(), y.item_mut(b), out);
    }
    Ok(y)
}

/// Gradients of a convolution: returns `dx` and accumulates into `dweight`.
pub fn conv1d_backward<T: Real>(
    x: &Tensor3<T>,
    weight: &[T],
    geom: ConvGeometry,
    dy: &Tensor3<T>,
    dweight: &mut [T],
) -> Result<Tensor3<T>> {
    let [batch, _, frames] = x.shape();
    let out = geom.out_frames(frames);
    if dy.shape() != [batch, geom.out_channels, out] {
        return Err(Error::Shape(format!(
            "conv1d upstream gradient {:?}, expected {:?}",
            dy.shape(),
            [batch, geom.out_channels, out]
        )));
    }
    let w = MatRef::rows(weight, geom.out_channels, geom.patch_len());
    let mut dx = Tensor3::zeros(batch, geom.in_channels, frames);
    let mut col = vec![T::zero(); geom.patch_len() * out];
    let mut dcol = vec![T::zero(); geom.patch_len() * out];
    for b in 0..batch {
        let g = MatRef::rows(dy.item(b), geom.out_channels, out);
        if geom.is_pointwise() {
            let xb = MatRef::rows(x.item(b), geom.in_channels, frames);
            gemm(T::one(), g, xb.t(), T::one(), dweight, geom.patch_len());
            gemm(T::one(), w.t(), g, T::zero(), dx.item_mut(b), frames);
        } else {
            geom.im2col(x.item(b), frames, &mut col);
            let cols = MatRef::rows(&col, geom.patch_len(), out);
            gemm(T::one(), g, cols.t(), T::one(), dweight, geom.patch_len());
            gemm(T::one(), w.t(), g, T::zero(), &mut dcol, out);
            geom.col2im_add(&dcol, frames, dx.item_mut(b));
        }
    }
    Ok(dx)
}

/// Bias-free "same"-padded 1D convolution layer.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub geom: ConvGeometry,
    pub weight: ParamId,
    input: Option<Tensor3<T>>,
}

impl<T: Real> Conv1d<T> {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore<T>,
        name: &str,
        geom: ConvGeometry,
        rng: &mut R,
    ) -> Result<Self> {
        let n = geom.out_channels * geom.patch_len();
        let weight = store.add_param(
            &format!("{name}.weight"),
            &[geom.out_channels, geom.in_channels, geom.kernel],
            init::fan_in_uniform(rng, n, geom.patch_len()),
        )?;
        Ok(Conv1d {
            geom,
            weight,
            input: None,
        })
    }

    pub fn forward(&mut self, store: &ParameterStore<T>, x: Tensor3<T>, record: bool) -> Result<Tensor3<T>> {
        let y = conv1d_forward(&x, store.value(self.weight), self.geom)?;
        if record {
            self.input = Some(x);
        }
        Ok(y)
    }

    pub fn backward(&mut self, store: &mut ParameterStore<T>, dy: &Tensor3<T>) -> Result<Tensor3<T>> {
        let x = self
            .input
            .take()
            .ok_or_else(|| Error::State("conv1d backward without a recorded forward".into()))?;
        let (w, dw) = store.value_and_grad(self.weight);
        conv1d_backward(&x, w, self.geom, dy, dw)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Direct sliding-window sum with explicit zero padding.
    fn brute_conv(x: &Tensor3<f64>, w: &[f64], g: ConvGeometry) -> Vec<f64> {
        let [batch, _, frames] = x.shape();
        let out = frames.div_ceil(g.stride);
        let total_pad = ((out - 1) * g.stride + g.kernel).saturating_sub(frames);
        let left = (total_pad / 2) as i64;
        let mut y = vec![0.0; batch * g.out_channels * out];
        for b in 0..batch {
            for co in 0..g.out_channels {
                for t in 0..out {
                    let mut s = 0.0;
                    for ci in 0..g.in_channels {
                        for j in 0..g.kernel {
                            let p = (t * g.stride + j) as i64 - left;
                            if p >= 0 && (p as usize) < frames {
                                s += w[(co * g.in_channels + ci) * g.kernel + j] * x.at(b, ci, p as usize);
                            }
                        }
                    }
                    y[(b * g.out_channels + co) * out + t] = s;
                }
            }
        }
        y
    }

    #[test]
    fn identity_kernel_leaves_input_unchanged() {
        let g = ConvGeometry::new(3, 3, 5, 1).unwrap();
        let mut w = vec![0.0; 3 * 3 * 5];
        for c in 0..3 {
            w[(c * 3 + c) * 5 + 2] = 1.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor3::from_vec(random(&mut rng, 2 * 3 * 11), [2, 3, 11]).unwrap();
        assert_eq!(conv1d_forward(&x, &w, g).unwrap(), x);
    }

    #[test]
    fn stride_two_halves_width_rounding_up() {
        let g = ConvGeometry::new(1, 1, 7, 2).unwrap();
        let x = Tensor3::<f32>::zeros(1, 1, 7500);
        assert_eq!(conv1d_forward(&x, &[0.0; 7], g).unwrap().frames(), 3750);
        let x = Tensor3::<f32>::zeros(1, 1, 59);
        assert_eq!(conv1d_forward(&x, &[0.0; 7], g).unwrap().frames(), 30);
    }

    #[test]
    fn matches_brute_force_sliding_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(cin, cout, w, k, s) in &[(2, 3, 8, 3, 1), (2, 2, 8, 3, 2), (3, 4, 9, 5, 2), (4, 2, 5, 1, 1), (1, 2, 3, 7, 2)] {
            let g = ConvGeometry::new(cin, cout, k, s).unwrap();
            let x = Tensor3::from_vec(random(&mut rng, cin * w), [1, cin, w]).unwrap();
            let wt = random(&mut rng, cout * cin * k);
            let y = conv1d_forward(&x, &wt, g).unwrap();
            for (a, b) in y.data().iter().zip(brute_conv(&x, &wt, g)) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_even_kernels_and_channel_mismatch() {
        assert!(ConvGeometry::new(1, 1, 4, 1).is_err());
        let g = ConvGeometry::new(2, 1, 3, 1).unwrap();
        let x = Tensor3::<f64>::zeros(1, 3, 4);
        assert!(matches!(conv1d_forward(&x, &[0.0; 6], g), Err(Error::Shape(_))));
    }
}
