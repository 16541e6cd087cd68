//! Patch unfolding (im2col) and its adjoint (col2im) as differentiable CPU
//! ops. A convolution becomes one unfold plus one matrix product, and its
//! backward pass one matrix product plus one fold, which is far cheaper than
//! the direct convolution kernels' backward pass.

use candle_core::{CpuStorage, CustomOp1, Layout, Shape, Tensor, WithDType};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Geometry {
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    ph: usize,
    pw: usize,
    oh: usize,
    ow: usize,
}

impl Geometry {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn cols(&self) -> usize {
        self.oh * self.ow
    }

    /// Input index along one axis for output position `o` and kernel tap `k`.
    fn source(o: usize, k: usize, stride: usize, pad: usize, len: usize) -> Option<usize> {
        (o * stride + k).checked_sub(pad).filter(|&i| i < len)
    }

    /// Visits every (column-buffer index, image index) pair that is in range.
    fn for_each(&self, mut f: impl FnMut(usize, usize)) {
        let (rows, cols) = (self.rows(), self.cols());
        for b in 0..self.b {
            for c in 0..self.c {
                let img = (b * self.c + c) * self.h * self.w;
                for ky in 0..self.kh {
                    for kx in 0..self.kw {
                        let row = (c * self.kh + ky) * self.kw + kx;
                        let col_base = (b * rows + row) * cols;
                        for oy in 0..self.oh {
                            let Some(iy) = Self::source(oy, ky, self.stride, self.ph, self.h) else {
                                continue;
                            };
                            for ox in 0..self.ow {
                                if let Some(ix) = Self::source(ox, kx, self.stride, self.pw, self.w) {
                                    f(col_base + oy * self.ow + ox, img + iy * self.w + ix);
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

fn contiguous<'a, T: WithDType>(data: &'a [T], layout: &Layout) -> candle_core::Result<&'a [T]> {
    match layout.contiguous_offsets() {
        Some((start, end)) => Ok(&data[start..end]),
        None => candle_core::bail!("unfold ops need contiguous inputs"),
    }
}

fn unfold_slice<T: WithDType>(src: &[T], g: &Geometry) -> Vec<T> {
    let mut out = vec![T::zero(); g.b * g.rows() * g.cols()];
    g.for_each(|col, img| out[col] = src[img]);
    out
}

fn fold_slice<T: WithDType>(src: &[T], g: &Geometry) -> Vec<T> {
    let mut out = vec![T::zero(); g.b * g.c * g.h * g.w];
    g.for_each(|col, img| out[img] += src[col]);
    out
}

struct Unfold(Geometry);
struct Fold(Geometry);

macro_rules! dispatch {
    ($storage:expr, $layout:expr, $f:ident, $g:expr) => {
        match $storage {
            CpuStorage::F32(d) => CpuStorage::F32($f(contiguous(d, $layout)?, $g)),
            CpuStorage::F64(d) => CpuStorage::F64($f(contiguous(d, $layout)?, $g)),
            _ => candle_core::bail!("unfold ops support f32 and f64 only"),
        }
    };
}

impl CustomOp1 for Unfold {
    fn name(&self) -> &'static str {
        "unfold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch!(storage, layout, unfold_slice, g);
        Ok((out, Shape::from((g.b, g.rows(), g.cols()))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Fold(self.0))?))
    }
}

impl CustomOp1 for Fold {
    fn name(&self) -> &'static str {
        "fold"
    }

    fn cpu_fwd(&self, storage: &CpuStorage, layout: &Layout) -> candle_core::Result<(CpuStorage, Shape)> {
        let g = &self.0;
        let out = dispatch!(storage, layout, fold_slice, g);
        Ok((out, Shape::from((g.b, g.c, g.h, g.w))))
    }

    fn bwd(&self, _arg: &Tensor, _res: &Tensor, grad: &Tensor) -> candle_core::Result<Option<Tensor>> {
        Ok(Some(grad.contiguous()?.apply_op1(Unfold(self.0))?))
    }
}

/// `(B, C, H, W)` to `(B, C*kh*kw, oh*ow)` columns of zero-padded patches,
/// rows ordered channel-major then kernel row then kernel column.
pub fn unfold(
    x: &Tensor,
    kernel: (usize, usize),
    stride: usize,
    pad: (usize, usize),
) -> candle_core::Result<(Tensor, (usize, usize))> {
    let (b, c, h, w) = x.dims4()?;
    let (kh, kw) = kernel;
    if stride == 0 {
        candle_core::bail!("stride must be positive");
    }
    let (hp, wp) = (h + 2 * pad.0, w + 2 * pad.1);
    if hp < kh || wp < kw {
        candle_core::bail!("kernel {kh}x{kw} larger than padded input {hp}x{wp}");
    }
    let g = Geometry {
        b,
        c,
        h,
        w,
        kh,
        kw,
        stride,
        ph: pad.0,
        pw: pad.1,
        oh: (hp - kh) / stride + 1,
        ow: (wp - kw) / stride + 1,
    };
    Ok((x.contiguous()?.apply_op1(Unfold(g))?, (g.oh, g.ow)))
}

/// 2-D cross-correlation of `(B, C, H, W)` with `(O, C, kh, kw)` kernels.
pub fn conv2d(x: &Tensor, weight: &Tensor, stride: usize, pad: (usize, usize)) -> candle_core::Result<Tensor> {
    let (b, c, _, _) = x.dims4()?;
    let (o, c_w, kh, kw) = weight.dims4()?;
    if c != c_w {
        candle_core::bail!("conv input has {c} channels, kernel expects {c_w}");
    }
    let (cols, (oh, ow)) = unfold(x, (kh, kw), stride, pad)?;
    weight
        .reshape((o, c * kh * kw))?
        .broadcast_matmul(&cols)?
        .reshape((b, o, oh, ow))
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{Device, Var};

    fn seeded(shape: &[usize], seed: u64) -> Tensor {
        let n: usize = shape.iter().product();
        let v: Vec<f64> = (0..n)
            .map(|i| (((i as u64 + 1) * 2654435761 + seed * 97) % 1000) as f64 / 500.0 - 1.0)
            .collect();
        Tensor::from_vec(v, shape, &Device::Cpu).unwrap()
    }

    type Grads = (Vec<f64>, Vec<f64>, Vec<f64>);

    fn run(x: &Tensor, w: &Tensor, f: impl Fn(&Tensor, &Tensor) -> Tensor) -> Grads {
        let xv = Var::from_tensor(x).unwrap();
        let wv = Var::from_tensor(w).unwrap();
        let y = f(xv.as_tensor(), wv.as_tensor());
        let r = seeded(y.dims(), 7);
        let g = (&y * r).unwrap().sum_all().unwrap().backward().unwrap();
        let flat = |t: &Tensor| t.flatten_all().unwrap().to_vec1::<f64>().unwrap();
        (flat(&y), flat(g.get(&xv).unwrap()), flat(g.get(&wv).unwrap()))
    }

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(p, q)| (p - q).abs() < 1e-9)
    }

    #[test]
    fn matches_direct_conv_and_its_gradients() {
        // sizes where the direct kernels' own backward is shape-consistent
        for (k, stride, pad, h, w) in [
            (3, 1, 1, 7, 9),
            (4, 2, 1, 8, 10),
            (7, 1, 3, 6, 5),
            (4, 1, 1, 6, 6),
            (5, 2, 2, 9, 11),
            (4, 2, 0, 8, 8),
        ] {
            let x = seeded(&[2, 3, h, w], 1);
            let wt = seeded(&[4, 3, k, k], 2);
            let ours = run(&x, &wt, |x, w| conv2d(x, w, stride, (pad, pad)).unwrap());
            let direct = run(&x, &wt, |x, w| x.conv2d(w, pad, stride, 1, 1).unwrap());
            assert!(close(&ours.0, &direct.0), "forward k{k} s{stride} p{pad}");
            assert!(close(&ours.1, &direct.1), "input grad k{k} s{stride} p{pad}");
            assert!(close(&ours.2, &direct.2), "weight grad k{k} s{stride} p{pad}");
        }
    }

    #[test]
    fn rectangular_kernels_match_padded_direct_conv() {
        let x = seeded(&[1, 2, 6, 11], 3);
        let wt = seeded(&[3, 2, 3, 5], 4);
        let ours = conv2d(&x, &wt, 1, (1, 2)).unwrap();
        let direct = x
            .pad_with_zeros(2, 1, 1)
            .unwrap()
            .pad_with_zeros(3, 2, 2)
            .unwrap()
            .conv2d(&wt, 0, 1, 1, 1)
            .unwrap();
        let diff: f64 = (ours - direct).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
        assert!(diff < 1e-12);
    }

    #[test]
    fn fold_is_the_adjoint_of_unfold() {
        // <unfold(x), y> == <x, fold(y)>
        let x = seeded(&[2, 2, 5, 6], 5);
        let (cols, _) = unfold(&x, (3, 2), 2, (1, 1)).unwrap();
        let y = seeded(cols.dims(), 6);
        let g = Geometry {
            b: 2,
            c: 2,
            h: 5,
            w: 6,
            kh: 3,
            kw: 2,
            stride: 2,
            ph: 1,
            pw: 1,
            oh: 3,
            ow: 4,
        };
        assert_eq!(cols.dims(), &[2, 12, 12]);
        let folded = y.apply_op1(Fold(g)).unwrap();
        let lhs: f64 = (&cols * &y).unwrap().sum_all().unwrap().to_scalar().unwrap();
        let rhs: f64 = (&x * &folded).unwrap().sum_all().unwrap().to_scalar().unwrap();
        assert!((lhs - rhs).abs() < 1e-9);
    }

    #[test]
    fn non_contiguous_input_is_handled() {
        let x = seeded(&[1, 2, 5, 4], 8);
        let xt = x.transpose(2, 3).unwrap();
        let wt = seeded(&[2, 2, 3, 3], 9);
        let a = conv2d(&xt, &wt, 1, (1, 1)).unwrap();
        let b = conv2d(&xt.contiguous().unwrap(), &wt, 1, (1, 1)).unwrap();
        let diff: f64 = (a - b).unwrap().abs().unwrap().max_all().unwrap().to_scalar().unwrap();
        assert_eq!(diff, 0.0);
    }
}
