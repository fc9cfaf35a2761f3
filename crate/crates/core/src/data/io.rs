use std::path::Path;

use image::{DynamicImage, GrayImage};
use ndarray::Array2;

use super::{Domain, FingerprintSample};
use crate::{Error, Result};

fn open(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Intensities divided by the maximum of the pixel depth.
fn normalized(img: &DynamicImage) -> Array2<f64> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    match img {
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA16(_)
        | DynamicImage::ImageRgb16(_)
        | DynamicImage::ImageRgba16(_) => {
            let g = img.to_luma16();
            Array2::from_shape_vec(
                (h, w),
                g.into_raw()
                    .into_iter()
                    .map(|v| f64::from(v) / 65535.0)
                    .collect(),
            )
            .expect("luma16 shape")
        }
        DynamicImage::ImageRgb32F(_) | DynamicImage::ImageRgba32F(_) => {
            let g = img.to_luma32f();
            Array2::from_shape_vec(
                (h, w),
                g.into_raw()
                    .into_iter()
                    .map(|v| f64::from(v).clamp(0.0, 1.0))
                    .collect(),
            )
            .expect("luma32f shape")
        }
        _ => {
            let g = img.to_luma8();
            Array2::from_shape_vec(
                (h, w),
                g.into_raw()
                    .into_iter()
                    .map(|v| f64::from(v) / 255.0)
                    .collect(),
            )
            .expect("luma8 shape")
        }
    }
}

/// Reads a grayscale image and, optionally, its ROI mask.
///
/// The image is scaled to `[0, 1]` by the pixel-depth maximum. The mask is
/// normalized the same way and binarized at 0.5. The returned sample has
/// `id` set to the image file stem, an empty database name and the target
/// domain; use [`FingerprintSample::with_origin`] to tag it.
pub fn load_sample(image_path: &Path, mask_path: Option<&Path>) -> Result<FingerprintSample> {
    let img = open(image_path)?;
    let image = normalized(&img);
    let (h, w) = image.dim();
    let mask = match mask_path {
        Some(mp) => {
            let m = normalized(&open(mp)?);
            if m.dim() != (h, w) {
                return Err(Error::Shape(format!(
                    "mask {} is {}×{} but image {} is {}×{}",
                    mp.display(),
                    m.dim().1,
                    m.dim().0,
                    image_path.display(),
                    w,
                    h
                )));
            }
            Some(m.mapv(|v| u8::from(v >= 0.5)))
        }
        None => None,
    };
    let id = image_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(FingerprintSample {
        image,
        mask,
        domain: Domain::Target,
        database: String::new(),
        id,
        native_size: (w, h),
    })
}

/// Writes a `[0, 1]` plane as an 8-bit grayscale PNG (or any format the
/// extension selects).
pub fn save_plane(plane: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = plane.dim();
    let buf: Vec<u8> = plane
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let img = GrayImage::from_raw(w as u32, h as u32, buf).expect("plane buffer");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes a binary mask with foreground at 255.
pub fn save_mask(mask: &Array2<u8>, path: &Path) -> Result<()> {
    let (h, w) = mask.dim();
    let buf: Vec<u8> = mask.iter().map(|&v| if v > 0 { 255 } else { 0 }).collect();
    let img = GrayImage::from_raw(w as u32, h as u32, buf).expect("mask buffer");
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::{ImageBuffer, Luma};

    #[test]
    fn white_image_normalizes_to_one_and_mask_binarizes() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("a.png");
        let mp = dir.path().join("a_mask.png");
        GrayImage::from_pixel(6, 4, Luma([255])).save(&ip).unwrap();
        GrayImage::from_fn(6, 4, |x, _| Luma([if x < 3 { 0 } else { 255 }]))
            .save(&mp)
            .unwrap();
        let s = load_sample(&ip, Some(&mp)).unwrap();
        assert!(s.image.iter().all(|&v| v == 1.0));
        let m = s.mask.unwrap();
        assert!(m.iter().all(|&v| v == 0 || v == 1));
        assert_eq!(m.iter().map(|&v| v as usize).sum::<usize>(), 12);
        assert_eq!(s.native_size, (6, 4));
        assert_eq!(s.id, "a");
    }

    #[test]
    fn sixteen_bit_depth_uses_its_own_maximum() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("deep.png");
        let img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_pixel(3, 3, Luma([65535]));
        img.save(&ip).unwrap();
        let s = load_sample(&ip, None).unwrap();
        assert!(s.image.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn mask_dimension_mismatch_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let ip = dir.path().join("img.png");
        let mp = dir.path().join("mask.png");
        GrayImage::new(300, 480).save(&ip).unwrap();
        GrayImage::new(300, 300).save(&mp).unwrap();
        assert!(matches!(load_sample(&ip, Some(&mp)), Err(Error::Shape(_))));
    }

    #[test]
    fn unreadable_file_is_an_error() {
        let err = load_sample(Path::new("/nonexistent/x.png"), None).unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
