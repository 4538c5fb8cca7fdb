//! Image quality metrics between true and recovered magnitude images.

use serde::{Deserialize, Serialize};

use crate::grid::Image;
use crate::{Error, Result};

/// PSNR reported for identical images.
pub const PSNR_CAP_DB: f64 = 100.0;

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.rows() != b.rows() {
        return Err(Error::dim("image rows", a.rows(), b.rows()));
    }
    if a.cols() != b.cols() {
        return Err(Error::dim("image columns", a.cols(), b.cols()));
    }
    Ok(())
}

/// Divides both images by `max(truth)` and clips the estimate to `[0, 1]`.
pub fn normalize_pair(truth: &Image, estimate: &Image) -> Result<(Image, Image)> {
    same_shape(truth, estimate)?;
    let peak = truth.max();
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::Degenerate("truth image is all zero".into()));
    }
    Ok((truth.map(|v| v / peak), estimate.map(|v| (v / peak).clamp(0.0, 1.0))))
}

pub fn immse(a: &Image, b: &Image) -> Result<f64> {
    same_shape(a, b)?;
    if a.is_empty() {
        return Err(Error::Degenerate("empty image".into()));
    }
    Ok(a.data().iter().zip(b.data()).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / a.len() as f64)
}

/// `10 log10(peak^2 / IMMSE)`, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    let mse = immse(a, b)?;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (peak * peak / mse).log10()).min(PSNR_CAP_DB))
}

/// Pearson correlation; `None` when either image is constant.
pub fn pcc(a: &Image, b: &Image) -> Result<Option<f64>> {
    same_shape(a, b)?;
    let n = a.len() as f64;
    let ma = a.data().iter().sum::<f64>() / n;
    let mb = b.data().iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.data().iter().zip(b.data()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return Ok(None);
    }
    Ok(Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsimParams {
    pub sigma: f64,
    /// Window half-width (the window is `2 radius + 1` wide).
    pub radius: usize,
    pub k1: f64,
    pub k2: f64,
    pub peak: f64,
}

impl Default for SsimParams {
    fn default() -> Self {
        Self {
            sigma: 1.5,
            radius: 5,
            k1: 0.01,
            k2: 0.03,
            peak: 1.0,
        }
    }
}

/// Gaussian-weighted local mean; the window is truncated at the borders and
/// its weights renormalized.
fn local_mean(data: &[f64], rows: usize, cols: usize, kernel: &[f64], radius: usize) -> Vec<f64> {
    let pass = |src: &[f64], along_rows: bool| -> Vec<f64> {
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                let (pos, len) = if along_rows { (c, cols) } else { (r, rows) };
                let lo = pos.saturating_sub(radius);
                let hi = (pos + radius).min(len - 1);
                let (mut acc, mut wsum) = (0.0, 0.0);
                for p in lo..=hi {
                    let w = kernel[p + radius - pos];
                    let v = if along_rows {
                        src[r * cols + p]
                    } else {
                        src[p * cols + c]
                    };
                    acc += w * v;
                    wsum += w;
                }
                out[r * cols + c] = acc / wsum;
            }
        }
        out
    };
    pass(&pass(data, true), false)
}

/// Mean structural similarity.
pub fn ssim(a: &Image, b: &Image, params: &SsimParams) -> Result<f64> {
    same_shape(a, b)?;
    if a.is_empty() {
        return Err(Error::Degenerate("SSIM needs at least a 1x1 image".into()));
    }
    if !(params.sigma > 0.0) {
        return Err(Error::Parameter("SSIM sigma must be positive".into()));
    }
    let (rows, cols) = (a.rows(), a.cols());
    let r = params.radius as isize;
    let kernel: Vec<f64> = (-r..=r)
        .map(|d| (-((d * d) as f64) / (2.0 * params.sigma * params.sigma)).exp())
        .collect();
    let c1 = (params.k1 * params.peak).powi(2);
    let c2 = (params.k2 * params.peak).powi(2);
    let mean = |v: &[f64]| local_mean(v, rows, cols, &kernel, params.radius);
    let prod = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p * q).collect::<Vec<_>>();
    let (da, db) = (a.data(), b.data());
    let mu_a = mean(da);
    let mu_b = mean(db);
    let e_aa = mean(&prod(da, da));
    let e_bb = mean(&prod(db, db));
    let e_ab = mean(&prod(da, db));
    let mut total = 0.0;
    for k in 0..rows * cols {
        let (ma, mb) = (mu_a[k], mu_b[k]);
        let va = e_aa[k] - ma * ma;
        let vb = e_bb[k] - mb * mb;
        let cov = e_ab[k] - ma * mb;
        total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
    }
    Ok(total / (rows * cols) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MetricRow {
    pub immse: f64,
    pub psnr_db: f64,
    pub ssim: f64,
    pub pcc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub per_subcarrier: Vec<MetricRow>,
    pub mean: MetricRow,
}

/// Metrics on normalized pairs for every subcarrier, plus their average.
pub fn evaluate(truth: &[Image], estimate: &[Image], params: &SsimParams) -> Result<MetricReport> {
    if truth.len() != estimate.len() {
        return Err(Error::dim("image count", truth.len(), estimate.len()));
    }
    if truth.is_empty() {
        return Err(Error::Degenerate("no images to compare".into()));
    }
    let per_subcarrier = truth
        .iter()
        .zip(estimate)
        .map(|(t, e)| {
            let (t, e) = normalize_pair(t, e)?;
            Ok(MetricRow {
                immse: immse(&t, &e)?,
                psnr_db: psnr(&t, &e, 1.0)?,
                ssim: ssim(&t, &e, params)?,
                pcc: pcc(&t, &e)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_subcarrier.len() as f64;
    let pccs: Vec<f64> = per_subcarrier.iter().filter_map(|r| r.pcc).collect();
    let mean = MetricRow {
        immse: per_subcarrier.iter().map(|r| r.immse).sum::<f64>() / n,
        psnr_db: per_subcarrier.iter().map(|r| r.psnr_db).sum::<f64>() / n,
        ssim: per_subcarrier.iter().map(|r| r.ssim).sum::<f64>() / n,
        pcc: if pccs.is_empty() {
            None
        } else {
            Some(pccs.iter().sum::<f64>() / pccs.len() as f64)
        },
    };
    Ok(MetricReport { per_subcarrier, mean })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn img(rows: usize, cols: usize, v: &[f64]) -> Image {
        Image::new(rows, cols, v.to_vec())
    }

    #[test]
    fn normalize_examples() {
        let t = img(1, 3, &[0.2, 1.0, 0.5]);
        let e = img(1, 3, &[1.5, -0.1, 0.3]);
        let (tn, en) = normalize_pair(&t, &e).unwrap();
        assert_eq!(tn, t);
        assert_eq!(en.data(), &[1.0, 0.0, 0.3]);
        let t2 = img(1, 3, &[0.0, 4.0, 2.0]);
        let (tn, _) = normalize_pair(&t2, &e).unwrap();
        assert_eq!(tn.max(), 1.0);
        assert!(matches!(
            normalize_pair(&img(1, 2, &[0.0, 0.0]), &img(1, 2, &[1.0, 0.0])),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn hand_cases() {
        let a = img(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let b = img(2, 2, &[0.0, 0.5, 1.0, 0.0]);
        assert_eq!(immse(&a, &b).unwrap(), 0.0625);
        assert!((psnr(&a, &b, 1.0).unwrap() - 10.0 * 16f64.log10()).abs() < 1e-12);
        assert_eq!(immse(&a, &a).unwrap(), 0.0);
        assert_eq!(psnr(&a, &a, 1.0).unwrap(), PSNR_CAP_DB);
        assert_eq!(pcc(&a, &a).unwrap(), Some(1.0));
        let inv = a.map(|v| 1.0 - v);
        assert_eq!(pcc(&a, &inv).unwrap(), Some(-1.0));
        assert_eq!(pcc(&a, &img(2, 2, &[0.3; 4])).unwrap(), None);
    }

    #[test]
    fn ssim_bounds() {
        let a = img(3, 3, &[0.1, 0.9, 0.3, 0.0, 1.0, 0.5, 0.2, 0.7, 0.4]);
        assert!((ssim(&a, &a, &SsimParams::default()).unwrap() - 1.0).abs() < 1e-15);
        let z = img(3, 3, &[0.0; 9]);
        let s = ssim(&a, &z, &SsimParams::default()).unwrap();
        assert!(s > 0.0 && s < 1.0, "{s}");
        assert!(ssim(&img(0, 0, &[]), &img(0, 0, &[]), &SsimParams::default()).is_err());
    }

    fn arb_pair() -> impl Strategy<Value = (Image, Image)> {
        (2usize..7, 2usize..7).prop_flat_map(|(r, c)| {
            (
                proptest::collection::vec(0.0f64..1.0, r * c),
                proptest::collection::vec(0.0f64..1.0, r * c),
            )
                .prop_map(move |(a, b)| (img(r, c, &a), img(r, c, &b)))
        })
    }

    proptest! {
        #[test]
        fn symmetric((a, b) in arb_pair()) {
            prop_assert_eq!(immse(&a, &b).unwrap(), immse(&b, &a).unwrap());
            let p = SsimParams::default();
            prop_assert!((ssim(&a, &b, &p).unwrap() - ssim(&b, &a, &p).unwrap()).abs() < 1e-12);
            match (pcc(&a, &b).unwrap(), pcc(&b, &a).unwrap()) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
        }

        #[test]
        fn pcc_affine_invariant((a, b) in arb_pair(), s in 0.1f64..5.0, o in -2.0f64..2.0) {
            if let Some(r) = pcc(&a, &b).unwrap() {
                let r2 = pcc(&a.map(|v| s * v + o), &b).unwrap().unwrap();
                prop_assert!((r - r2).abs() < 1e-9);
            }
        }

        #[test]
        fn psnr_consistent((a, b) in arb_pair()) {
            let m = immse(&a, &b).unwrap();
            if m > 0.0 {
                let p = psnr(&a, &b, 1.0).unwrap();
                prop_assert!((p - (10.0 * (1.0 / m).log10()).min(PSNR_CAP_DB)).abs() < 1e-12);
            }
        }
    }
}
