pub(crate) struct Strides {
    pub rsa: isize,
    pub csa: isize,
    pub rsb: isize,
    pub csb: isize,
    pub rsc: isize,
    pub csc: isize,
    m: usize,
    k: usize,
    n: usize,
}

impl Strides {
    pub fn new(m: usize, k: usize, n: usize, a_t: bool, b_t: bool) -> Self {
        let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
        let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
        Self {
            rsa,
            csa,
            rsb,
            csb,
            rsc: n as isize,
            csc: 1,
            m,
            k,
            n,
        }
    }

    pub fn check(&self, a: usize, b: usize, c: usize) {
        assert!(a >= self.m * self.k, "gemm: A has {a} values, needs {}", self.m * self.k);
        assert!(b >= self.k * self.n, "gemm: B has {b} values, needs {}", self.k * self.n);
        assert!(c >= self.m * self.n, "gemm: C has {c} values, needs {}", self.m * self.n);
    }
}

/// Geometry of a strided, zero-padded 2D convolution over one image.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeometry {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }

    pub fn cols(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds `image` (`channels x height x width`) into `rows x cols`.
    pub fn im2col<S: Copy + Default>(&self, image: &[S], cols: &mut [S]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let ncols = self.cols();
        for c in 0..self.channels {
            let plane = &image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let dst = &mut cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ky) as isize - p;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.height as isize {
                            line.iter_mut().for_each(|v| *v = S::default());
                            continue;
                        }
                        let src = &plane[iy as usize * self.width..(iy as usize + 1) * self.width];
                        for (ox, v) in line.iter_mut().enumerate() {
                            let ix = (ox * s + kx) as isize - p;
                            *v = if ix < 0 || ix >= self.width as isize {
                                S::default()
                            } else {
                                src[ix as usize]
                            };
                        }
                    }
                }
            }
        }
    }

    /// Adjoint of [`im2col`]: scatters-adds `cols` back onto `image`.
    pub fn col2im<S: Copy + std::ops::AddAssign>(&self, cols: &[S], image: &mut [S]) {
        let (k, s, p) = (self.kernel, self.stride, self.padding as isize);
        let ncols = self.cols();
        for c in 0..self.channels {
            let plane =
                &mut image[c * self.height * self.width..(c + 1) * self.height * self.width];
            for ky in 0..k {
                for kx in 0..k {
                    let row = (c * k + ky) * k + kx;
                    let src = &cols[row * ncols..(row + 1) * ncols];
                    for oy in 0..self.out_h {
                        let iy = (oy * s + ky) as isize - p;
                        if iy < 0 || iy >= self.height as isize {
                            continue;
                        }
                        let base = iy as usize * self.width;
                        for ox in 0..self.out_w {
                            let ix = (ox * s + kx) as isize - p;
                            if ix >= 0 && ix < self.width as isize {
                                plane[base + ix as usize] += src[oy * self.out_w + ox];
                            }
                        }
                    }
                }
            }
        }
    }
}
