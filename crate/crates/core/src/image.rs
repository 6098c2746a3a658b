//! Grayscale intensity images and the patch machinery built on them.
//!
//! Patches are column-stacked: inside a patch pixels run down each column
//! first, and the patch anchors of a fully overlapping extraction are
//! enumerated column-major over the image as well.

use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{Error, Result};

/// A 2-D grid of finite, nonnegative intensities.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    pixels: Array2<f64>,
}

impl Image {
    pub fn new(pixels: Array2<f64>) -> Result<Self> {
        if pixels.nrows() == 0 || pixels.ncols() == 0 {
            return Err(Error::dim("image must have at least one row and column"));
        }
        if let Some(v) = pixels.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(Error::arg(format!(
                "image pixels must be finite and nonnegative, found {v}"
            )));
        }
        Ok(Self { pixels })
    }

    /// Builds an image from row-major pixel values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::dim(format!(
                "{rows}x{cols} image needs {} pixels, got {}",
                rows * cols,
                data.len()
            )));
        }
        let pixels = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| Error::dim(e.to_string()))?;
        Self::new(pixels)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(Array2::from_elem((rows, cols), value))
    }

    pub fn rows(&self) -> usize {
        self.pixels.nrows()
    }

    pub fn cols(&self) -> usize {
        self.pixels.ncols()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.pixels.dim()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[[row, col]]
    }

    pub fn pixels(&self) -> ArrayView2<'_, f64> {
        self.pixels.view()
    }

    pub fn into_array(self) -> Array2<f64> {
        self.pixels
    }

    /// Pixel values in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        self.pixels.iter().copied().collect()
    }

    pub fn max(&self) -> f64 {
        self.pixels.iter().copied().fold(0.0, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.pixels.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn sum(&self) -> f64 {
        self.pixels.sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / (self.rows() * self.cols()) as f64
    }

    /// Applies `f` elementwise; the result must still be a valid image.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.pixels.mapv(f))
    }

    /// Number of distinct pixel values.
    pub fn distinct_levels(&self) -> usize {
        let mut v: Vec<u64> = self.pixels.iter().map(|p| p.to_bits()).collect();
        v.sort_unstable();
        v.dedup();
        v.len()
    }
}

/// Overlapping patches stored one per column, plus their top-left anchors.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMatrix {
    patch_rows: usize,
    patch_cols: usize,
    // d x N, column-major so that each patch is a contiguous slice.
    data: Array2<f64>,
    positions: Vec<(usize, usize)>,
}

impl PatchMatrix {
    /// Assembles a patch matrix from column-stacked patch vectors.
    pub fn from_patches(
        patch_rows: usize,
        patch_cols: usize,
        patches: Vec<Vec<f64>>,
        positions: Vec<(usize, usize)>,
    ) -> Result<Self> {
        let d = patch_rows * patch_cols;
        if patches.len() != positions.len() {
            return Err(Error::dim(format!(
                "{} patches but {} anchors",
                patches.len(),
                positions.len()
            )));
        }
        if let Some(p) = patches.iter().find(|p| p.len() != d) {
            return Err(Error::dim(format!(
                "patch has {} entries, expected {d}",
                p.len()
            )));
        }
        let n = patches.len();
        let flat: Vec<f64> = patches.into_iter().flatten().collect();
        let data = Array2::from_shape_vec((d, n).f(), flat).map_err(|e| Error::dim(e.to_string()))?;
        Ok(Self {
            patch_rows,
            patch_cols,
            data,
            positions,
        })
    }

    /// Same anchors and patch shape as `self`, new contents.
    pub fn with_data(&self, data: Array2<f64>) -> Result<Self> {
        if data.dim() != self.data.dim() {
            return Err(Error::dim(format!(
                "patch data {:?} does not match {:?}",
                data.dim(),
                self.data.dim()
            )));
        }
        Ok(Self {
            patch_rows: self.patch_rows,
            patch_cols: self.patch_cols,
            data: to_fortran(data),
            positions: self.positions.clone(),
        })
    }

    /// Pixels per patch.
    pub fn dim(&self) -> usize {
        self.patch_rows * self.patch_cols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn patch_shape(&self) -> (usize, usize) {
        (self.patch_rows, self.patch_cols)
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn patch(&self, i: usize) -> &[f64] {
        let d = self.dim();
        let all = self
            .data
            .as_slice_memory_order()
            .expect("patch data is contiguous");
        &all[i * d..(i + 1) * d]
    }

    /// Gathers the listed patches into a d x len(indices) column-major matrix.
    pub fn select(&self, indices: &[usize]) -> Array2<f64> {
        let d = self.dim();
        let mut flat = Vec::with_capacity(d * indices.len());
        for &i in indices {
            flat.extend_from_slice(self.patch(i));
        }
        Array2::from_shape_vec((d, indices.len()).f(), flat).expect("shape matches")
    }
}

pub(crate) fn to_fortran(a: Array2<f64>) -> Array2<f64> {
    if a.t().is_standard_layout() {
        a
    } else {
        let mut out = Array2::zeros(a.dim().f());
        out.assign(&a);
        out
    }
}

/// Extracts every `side x side` patch of `img` (stride 1).
pub fn extract_patches(img: &Image, side: usize) -> Result<PatchMatrix> {
    let (rows, cols) = img.dims();
    if side == 0 || side > rows.min(cols) {
        return Err(Error::dim(format!(
            "patch side {side} does not fit a {rows}x{cols} image"
        )));
    }
    let pr = rows - side + 1;
    let pc = cols - side + 1;
    let d = side * side;
    let mut flat = Vec::with_capacity(d * pr * pc);
    let mut positions = Vec::with_capacity(pr * pc);
    let px = img.pixels();
    for c0 in 0..pc {
        for r0 in 0..pr {
            positions.push((r0, c0));
            for dc in 0..side {
                for dr in 0..side {
                    flat.push(px[[r0 + dr, c0 + dc]]);
                }
            }
        }
    }
    let data = Array2::from_shape_vec((d, pr * pc).f(), flat).expect("shape matches");
    Ok(PatchMatrix {
        patch_rows: side,
        patch_cols: side,
        data,
        positions,
    })
}

/// Writes every patch back to its anchor and averages overlapping entries.
pub fn reproject_average(patches: &PatchMatrix, rows: usize, cols: usize) -> Result<Image> {
    let (ph, pw) = patches.patch_shape();
    let mut sum = Array2::<f64>::zeros((rows, cols));
    let mut count = Array2::<u32>::zeros((rows, cols));
    for (i, &(r0, c0)) in patches.positions().iter().enumerate() {
        if r0 + ph > rows || c0 + pw > cols {
            return Err(Error::dim(format!(
                "patch {i} at ({r0}, {c0}) exceeds a {rows}x{cols} image"
            )));
        }
        let p = patches.patch(i);
        for dc in 0..pw {
            for dr in 0..ph {
                sum[[r0 + dr, c0 + dc]] += p[dc * ph + dr];
                count[[r0 + dr, c0 + dc]] += 1;
            }
        }
    }
    if let Some(((r, c), _)) = count.indexed_iter().find(|(_, n)| **n == 0) {
        return Err(Error::dim(format!("pixel ({r}, {c}) is not covered by any patch")));
    }
    sum.zip_mut_with(&count, |s, &n| *s /= f64::from(n));
    Image::new(sum)
}

/// Linearly rescales `img` so that its maximum equals `peak`.
pub fn scale_to_peak(img: &Image, peak: f64) -> Result<Image> {
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::arg(format!("peak must be positive, got {peak}")));
    }
    let max = img.max();
    if max <= 0.0 {
        return Err(Error::arg("cannot rescale an all-zero image"));
    }
    let s = peak / max;
    img.map(|v| v * s)
}

/// `10 log10(max(reference)^2 / MSE)`; identical images give `f64::INFINITY`.
pub fn psnr(reference: &Image, estimate: &Image) -> Result<f64> {
    if reference.dims() != estimate.dims() {
        return Err(Error::dim(format!(
            "psnr of {:?} against {:?}",
            reference.dims(),
            estimate.dims()
        )));
    }
    let mse = mean_squared_error(reference, estimate);
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    let peak = reference.max();
    Ok(10.0 * (peak * peak / mse).log10())
}

pub(crate) fn mean_squared_error(a: &Image, b: &Image) -> f64 {
    let n = (a.rows() * a.cols()) as f64;
    a.pixels()
        .iter()
        .zip(b.pixels().iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / n
}

/// A small convolution kernel with odd side lengths.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    weights: Array2<f64>,
}

impl Kernel {
    pub fn new(weights: Array2<f64>) -> Result<Self> {
        let (h, w) = weights.dim();
        if h % 2 == 0 || w % 2 == 0 {
            return Err(Error::arg(format!("kernel must be odd-sided, got {h}x{w}")));
        }
        if weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("kernel weights must be finite"));
        }
        Ok(Self { weights })
    }

    /// The 1x1 kernel `[1]`.
    pub fn identity() -> Self {
        Self {
            weights: Array2::ones((1, 1)),
        }
    }

    /// Normalized `side x side` Gaussian.
    pub fn gaussian(side: usize, sigma: f64) -> Result<Self> {
        if side % 2 == 0 || !(sigma > 0.0) {
            return Err(Error::arg(format!(
                "gaussian kernel needs odd side and sigma > 0, got {side}, {sigma}"
            )));
        }
        let c = (side / 2) as f64;
        let mut w = Array2::from_shape_fn((side, side), |(r, col)| {
            let dr = r as f64 - c;
            let dc = col as f64 - c;
            (-(dr * dr + dc * dc) / (2.0 * sigma * sigma)).exp()
        });
        let s = w.sum();
        w /= s;
        Ok(Self { weights: w })
    }

    pub fn ones(side: usize) -> Result<Self> {
        Self::new(Array2::ones((side, side)))
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn is_identity(&self) -> bool {
        self.weights.dim() == (1, 1) && self.weights[[0, 0]] == 1.0
    }
}

/// Same-size 2-D convolution with replicate padding at the borders.
pub fn convolve_same(img: &Image, kernel: &Kernel) -> Result<Image> {
    let (rows, cols) = img.dims();
    let k = kernel.weights();
    let (kh, kw) = k.dim();
    let (ch, cw) = ((kh / 2) as isize, (kw / 2) as isize);
    let px = img.pixels();
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let out = Array2::from_shape_fn((rows, cols), |(r, c)| {
        let mut acc = 0.0;
        for i in 0..kh {
            for j in 0..kw {
                // flipped kernel: true convolution
                let rr = clamp(r as isize + ch - i as isize, rows);
                let cc = clamp(c as isize + cw - j as isize, cols);
                acc += k[[i, j]] * px[[rr, cc]];
            }
        }
        acc
    });
    // Kernels with negative taps can push values below zero.
    Image::new(out.mapv(|v| v.max(0.0)))
}

/// Sums `factor x factor` blocks after replicate-padding to a multiple of `factor`.
pub fn bin_image(img: &Image, factor: usize) -> Result<Image> {
    if factor < 2 {
        return Err(Error::arg(format!("binning factor must be >= 2, got {factor}")));
    }
    let (rows, cols) = img.dims();
    let br = rows.div_ceil(factor);
    let bc = cols.div_ceil(factor);
    let px = img.pixels();
    let out = Array2::from_shape_fn((br, bc), |(r, c)| {
        let mut acc = 0.0;
        for i in 0..factor {
            for j in 0..factor {
                let rr = (r * factor + i).min(rows - 1);
                let cc = (c * factor + j).min(cols - 1);
                acc += px[[rr, cc]];
            }
        }
        acc
    });
    Image::new(out)
}

/// Bilinear upscaling back to `out_rows x out_cols`, divided by `factor^2`.
///
/// Each low-resolution pixel is taken to sit at the center of its
/// `factor x factor` block; coordinates beyond the outermost centers are
/// clamped.
pub fn upscale_bilinear(
    img: &Image,
    factor: usize,
    out_rows: usize,
    out_cols: usize,
) -> Result<Image> {
    let (rows, cols) = img.dims();
    if factor == 0 {
        return Err(Error::arg("upscale factor must be positive"));
    }
    if out_rows < rows || out_cols < cols {
        return Err(Error::dim(format!(
            "cannot upscale {rows}x{cols} to smaller {out_rows}x{out_cols}"
        )));
    }
    let f = factor as f64;
    let norm = f * f;
    let px = img.pixels();
    let sample = |pos: f64, n: usize| -> (usize, usize, f64) {
        let p = pos.clamp(0.0, (n - 1) as f64);
        let lo = p.floor() as usize;
        let hi = (lo + 1).min(n - 1);
        (lo, hi, p - lo as f64)
    };
    let out = Array2::from_shape_fn((out_rows, out_cols), |(r, c)| {
        let (r0, r1, tr) = sample((r as f64 + 0.5) / f - 0.5, rows);
        let (c0, c1, tc) = sample((c as f64 + 0.5) / f - 0.5, cols);
        let top = px[[r0, c0]] * (1.0 - tc) + px[[r0, c1]] * tc;
        let bottom = px[[r1, c0]] * (1.0 - tc) + px[[r1, c1]] * tc;
        (top * (1.0 - tr) + bottom * tr) / norm
    });
    Image::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn img(a: Array2<f64>) -> Image {
        Image::new(a).unwrap()
    }

    #[test]
    fn rejects_negative_and_nan() {
        assert!(Image::new(array![[1.0, -1.0]]).is_err());
        assert!(Image::new(array![[f64::NAN]]).is_err());
        assert!(Image::from_vec(2, 2, vec![1.0; 3]).is_err());
    }

    #[test]
    fn single_patch_is_column_stacked() {
        let p = extract_patches(&img(array![[1.0, 2.0], [3.0, 4.0]]), 2).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.patch(0), &[1.0, 3.0, 2.0, 4.0]);
    }

    #[test]
    fn constant_image_patches() {
        let p = extract_patches(&Image::filled(3, 3, 1.0).unwrap(), 2).unwrap();
        assert_eq!(p.len(), 4);
        for i in 0..4 {
            assert_eq!(p.patch(i), &[1.0; 4]);
        }
        // column-major anchors
        assert_eq!(p.positions(), &[(0, 0), (1, 0), (0, 1), (1, 1)]);
    }

    #[test]
    fn patch_count_formula() {
        let p = extract_patches(&Image::filled(256, 256, 0.5).unwrap(), 20).unwrap();
        assert_eq!(p.len(), 237 * 237);
        assert_eq!(p.len(), 56169);
    }

    #[test]
    fn patch_larger_than_image_fails() {
        let e = extract_patches(&Image::filled(3, 5, 1.0).unwrap(), 4);
        assert!(matches!(e, Err(Error::Dimension(_))));
    }

    #[test]
    fn reproject_hand_counted() {
        let (a, b, c, e) = (1.0, 2.0, 4.0, 8.0);
        let pm = PatchMatrix::from_patches(1, 2, vec![vec![a, b], vec![c, e]], vec![(0, 0), (0, 1)])
            .unwrap();
        let out = reproject_average(&pm, 1, 3).unwrap();
        assert_eq!(out.to_row_major(), vec![a, (b + c) / 2.0, e]);
    }

    #[test]
    fn reproject_constant_patches() {
        let pm = extract_patches(&Image::filled(5, 4, 2.5).unwrap(), 3).unwrap();
        let out = reproject_average(&pm, 5, 4).unwrap();
        assert!(out.pixels().iter().all(|v| *v == 2.5));
    }

    #[test]
    fn reproject_uncovered_pixel_fails() {
        let pm = PatchMatrix::from_patches(1, 1, vec![vec![1.0]], vec![(0, 0)]).unwrap();
        assert!(reproject_average(&pm, 1, 2).is_err());
    }

    #[test]
    fn scale_examples() {
        let s = scale_to_peak(&img(array![[0.0, 5.0], [10.0, 10.0]]), 1.0).unwrap();
        assert_eq!(s.to_row_major(), vec![0.0, 0.5, 1.0, 1.0]);
        let same = img(array![[0.3, 1.0]]);
        assert_eq!(scale_to_peak(&same, 1.0).unwrap(), same);
        let s = scale_to_peak(&img(array![[255.0]]), 0.1).unwrap();
        assert!((s.get(0, 0) - 0.1).abs() < 1e-15);
        assert!(scale_to_peak(&Image::filled(2, 2, 0.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn psnr_examples() {
        let a = img(array![[1.0, 0.0], [0.5, 0.25]]);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);

        // peak 1, every pixel off by 0.1 -> MSE 0.01 -> 20 dB
        let b = a.map(|v| v + 0.1).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);

        // peak 255, MSE 1
        let r = img(array![[255.0, 10.0], [3.0, 4.0]]);
        let e = r.map(|v| v + 1.0).unwrap();
        assert!((psnr(&r, &e).unwrap() - 48.130_803_608_679_1).abs() < 1e-4);

        assert!(psnr(&a, &img(array![[1.0]])).is_err());
    }

    #[test]
    fn convolution_examples() {
        let x = img(array![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]);
        assert_eq!(convolve_same(&x, &Kernel::identity()).unwrap(), x);

        let ones = Image::filled(3, 3, 1.0).unwrap();
        let out = convolve_same(&ones, &Kernel::ones(3).unwrap()).unwrap();
        assert_eq!(out.get(1, 1), 9.0);

        let c = Image::filled(6, 5, 0.7).unwrap();
        let g = Kernel::gaussian(7, 1.5).unwrap();
        let out = convolve_same(&c, &g).unwrap();
        assert!(out.pixels().iter().all(|v| (v - 0.7).abs() < 1e-12));

        assert!(Kernel::new(Array2::ones((2, 2))).is_err());
    }

    #[test]
    fn convolution_flips_kernel() {
        let mut x = Array2::zeros((3, 3));
        x[[1, 1]] = 1.0;
        let k = Kernel::new(array![[0.0, 0.0, 0.0], [1.0, 0.0, 2.0], [0.0, 0.0, 0.0]]).unwrap();
        let out = convolve_same(&img(x), &k).unwrap();
        // impulse response reproduces the kernel
        assert_eq!(out.get(1, 0), 1.0);
        assert_eq!(out.get(1, 2), 2.0);
    }

    #[test]
    fn binning_examples() {
        let b = bin_image(&Image::filled(6, 6, 1.0).unwrap(), 3).unwrap();
        assert_eq!(b.dims(), (2, 2));
        assert!(b.pixels().iter().all(|v| *v == 9.0));

        let x = img(Array2::from_shape_fn((3, 3), |(r, c)| (r * 3 + c) as f64));
        let b = bin_image(&x, 3).unwrap();
        assert_eq!(b.to_row_major(), vec![36.0]);

        let c = Image::filled(7, 4, 0.2).unwrap();
        let b = bin_image(&c, 3).unwrap();
        assert_eq!(b.dims(), (3, 2));
        assert!(b.pixels().iter().all(|v| (v / 0.2 - 9.0).abs() < 1e-12));

        assert!(bin_image(&c, 1).is_err());
    }

    #[test]
    fn upscale_examples() {
        let lo = Image::filled(2, 3, 9.0).unwrap();
        let up = upscale_bilinear(&lo, 3, 6, 9).unwrap();
        assert!(up.pixels().iter().all(|v| (v - 1.0).abs() < 1e-12));

        let x = img(array![[1.0, 2.0], [3.0, 5.0]]);
        assert_eq!(upscale_bilinear(&x, 1, 2, 2).unwrap(), x);

        let ramp = img(array![[0.0, 9.0]]);
        let up = upscale_bilinear(&ramp, 3, 1, 6).unwrap();
        let row = up.to_row_major();
        assert!(row.windows(2).all(|w| w[0] <= w[1]), "{row:?}");
        assert_eq!(row[0], 0.0);
        assert_eq!(row[5], 1.0);

        assert!(upscale_bilinear(&x, 3, 1, 6).is_err());
    }

    fn arb_image() -> impl Strategy<Value = Image> {
        (1usize..9, 1usize..9).prop_flat_map(|(r, c)| {
            proptest::collection::vec(0.0f64..100.0, r * c)
                .prop_map(move |v| Image::from_vec(r, c, v).unwrap())
        })
    }

    proptest! {
        #[test]
        fn extract_reproject_round_trip(x in arb_image(), side in 1usize..9) {
            prop_assume!(side <= x.rows().min(x.cols()));
            let p = extract_patches(&x, side).unwrap();
            prop_assert_eq!(p.len(), (x.rows() - side + 1) * (x.cols() - side + 1));
            let back = reproject_average(&p, x.rows(), x.cols()).unwrap();
            for (a, b) in back.pixels().iter().zip(x.pixels().iter()) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
        }

        #[test]
        fn reprojection_within_contributor_range(
            vals in proptest::collection::vec(0.0f64..10.0, 4 * 9)
        ) {
            // nine 2x2 patches on a 4x4 grid
            let patches: Vec<Vec<f64>> = vals.chunks(4).map(|c| c.to_vec()).collect();
            let positions: Vec<_> = (0..3).flat_map(|c| (0..3).map(move |r| (r, c))).collect();
            let pm = PatchMatrix::from_patches(2, 2, patches.clone(), positions.clone()).unwrap();
            let out = reproject_average(&pm, 4, 4).unwrap();
            for r in 0..4 {
                for c in 0..4 {
                    let mut lo = f64::INFINITY;
                    let mut hi = f64::NEG_INFINITY;
                    for (p, &(r0, c0)) in patches.iter().zip(&positions) {
                        if r >= r0 && r < r0 + 2 && c >= c0 && c < c0 + 2 {
                            let v = p[(c - c0) * 2 + (r - r0)];
                            lo = lo.min(v);
                            hi = hi.max(v);
                        }
                    }
                    let v = out.get(r, c);
                    prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
                }
            }
        }

        #[test]
        fn binning_preserves_total(
            (r, c, v) in (1usize..4, 1usize..4).prop_flat_map(|(r, c)| {
                (Just(3 * r), Just(3 * c), proptest::collection::vec(0.0f64..50.0, 9 * r * c))
            })
        ) {
            let x = Image::from_vec(r, c, v).unwrap();
            let b = bin_image(&x, 3).unwrap();
            prop_assert!((b.sum() - x.sum()).abs() <= 1e-9 * x.sum().max(1.0));
        }

        #[test]
        fn psnr_depends_only_on_error_energy(
            x in arb_image(),
            shift in 0usize..50,
        ) {
            prop_assume!(x.max() > 0.0);
            let n = x.rows() * x.cols();
            let e: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 0.5 } else { -0.5 }).collect();
            let mut rotated = e.clone();
            rotated.rotate_left(shift % n);
            let add = |err: &[f64]| {
                // estimates may go negative; psnr only needs the arrays
                let v: Vec<f64> = x.to_row_major().iter().zip(err).map(|(a, b)| a + b + 1.0).collect();
                Image::from_vec(x.rows(), x.cols(), v).unwrap()
            };
            let shifted = x.map(|v| v + 1.0).unwrap();
            let p1 = psnr(&shifted, &add(&e)).unwrap();
            let p2 = psnr(&shifted, &add(&rotated)).unwrap();
            let neg: Vec<f64> = e.iter().map(|v| -v).collect();
            let p3 = psnr(&shifted, &add(&neg)).unwrap();
            prop_assert!((p1 - p2).abs() < 1e-9);
            prop_assert!((p1 - p3).abs() < 1e-9);
        }
    }
}
