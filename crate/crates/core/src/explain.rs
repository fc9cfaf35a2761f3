//! Seg-Grad-CAM heatmaps and overlay rendering.

use std::path::Path;

use image::{Rgb, RgbImage};
use ndarray::Array2;

use crate::data::{preprocess, resize_bilinear, resize_nearest, FingerprintSample};
use crate::nn::{Graph, Tensor};
use crate::training::{binarize, Segmenter, DEFAULT_THRESHOLD};
use crate::{Error, Result};

/// One heatmap request against a trained segmenter.
#[derive(Clone, Debug)]
pub struct CamRequest<'a> {
    pub segmenter: &'a Segmenter,
    pub sample: &'a FingerprintSample,
    /// Layer whose activations are weighted, e.g. `sg.dec0.conv2`.
    pub target_layer: String,
    /// Pixels whose logits form the class score, shaped like the sample
    /// image. Defaults to the predicted foreground.
    pub region: Option<Array2<u8>>,
}

impl<'a> CamRequest<'a> {
    /// Request on the last decoder convolution with the default region.
    pub fn new(segmenter: &'a Segmenter, sample: &'a FingerprintSample) -> Self {
        Self {
            segmenter,
            sample,
            target_layer: segmenter.backbone().last_decoder_layer(),
            region: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CamResult {
    /// Values in `[0, 1]`, at the network input resolution.
    pub heatmap: Array2<f64>,
    /// The preprocessed image the heatmap refers to.
    pub image: Array2<f64>,
    /// Set when the map degenerated to zeros.
    pub warning: Option<String>,
}

/// Gradient of the summed region logits with respect to the target layer,
/// averaged per channel, used to weight that layer's activations; the
/// rectified sum is upsampled to the input size and min-max normalized.
/// Activations are taken at the final refinement iteration.
pub fn seg_grad_cam(req: &CamRequest) -> Result<CamResult> {
    let seg = req.segmenter;
    let backbone = seg.backbone();
    let layers = backbone.layer_names();
    if !layers.contains(&req.target_layer) {
        return Err(Error::UnknownLayer {
            name: req.target_layer.clone(),
            available: layers,
        });
    }
    if let Some(r) = &req.region {
        if r.dim() != req.sample.image.dim() {
            return Err(Error::Shape(format!(
                "region {:?} vs sample {:?}",
                r.dim(),
                req.sample.image.dim()
            )));
        }
    }
    let side = seg.side();
    let prepared = preprocess(req.sample, side, backbone.config().depth)?;
    let mut g = Graph::new();
    let p = g.bind(seg.params());
    let x = g.constant(Tensor::from_planes([prepared.image.view()]));
    let out = backbone.forward_graph(&mut g, &p, x, backbone.config().iterations())?;
    let last = out.last();
    let region = match &req.region {
        Some(r) => resize_nearest(r, side, side),
        None => binarize(&g.value(last.mask).plane(0, 0), DEFAULT_THRESHOLD),
    };
    let zero = |warning: &str| {
        log::warn!("{warning}");
        Ok(CamResult {
            heatmap: Array2::zeros((side, side)),
            image: prepared.image.clone(),
            warning: Some(warning.to_string()),
        })
    };
    if region.iter().all(|&v| v == 0) {
        return zero("empty score region; returning a zero heatmap");
    }
    let weights = Tensor::new(
        vec![1, 1, side, side],
        region.iter().map(|&v| f64::from(v)).collect(),
    );
    let score = g.weighted_sum(last.logits, weights);
    let layer = last.layers[&req.target_layer];
    let grads = g.backward(score);
    let acts = g.value(layer);
    let (_, channels, h, w) = acts.dims4();
    let plane = h * w;
    let mut cam = vec![0.0; plane];
    if let Some(dact) = grads.get(layer) {
        for c in 0..channels {
            let gc = &dact.data()[c * plane..(c + 1) * plane];
            let weight = gc.iter().sum::<f64>() / plane as f64;
            let ac = &acts.data()[c * plane..(c + 1) * plane];
            for (v, a) in cam.iter_mut().zip(ac) {
                *v += weight * a;
            }
        }
    }
    let cam = Array2::from_shape_vec((h, w), cam.into_iter().map(|v| v.max(0.0)).collect())
        .expect("plane shape");
    let up = resize_bilinear(&cam, side, side);
    let (lo, hi) = up
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let spread = hi - lo;
    if spread.is_nan() || spread <= f64::EPSILON * hi.abs().max(1.0) {
        return zero("constant activation map; returning a zero heatmap");
    }
    Ok(CamResult {
        heatmap: up.mapv(|v| ((v - lo) / (hi - lo)).clamp(0.0, 1.0)),
        image: prepared.image,
        warning: None,
    })
}

const VIRIDIS: [[f64; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

fn colormap(v: f64) -> [f64; 3] {
    let s = v.clamp(0.0, 1.0) * (VIRIDIS.len() - 1) as f64;
    let i = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let f = s - i as f64;
    std::array::from_fn(|k| VIRIDIS[i][k] * (1.0 - f) + VIRIDIS[i + 1][k] * f)
}

/// Blends the grayscale image with a perceptually ordered colormap of the
/// heatmap; heat `h` mixes in the color with weight `h / 2`.
pub fn cam_overlay(image: &Array2<f64>, heatmap: &Array2<f64>) -> Result<RgbImage> {
    if image.dim() != heatmap.dim() {
        return Err(Error::Shape(format!(
            "image {:?} vs heatmap {:?}",
            image.dim(),
            heatmap.dim()
        )));
    }
    let (h, w) = image.dim();
    Ok(RgbImage::from_fn(w as u32, h as u32, |x, y| {
        let (x, y) = (x as usize, y as usize);
        let gray = image[[y, x]].clamp(0.0, 1.0) * 255.0;
        let heat = heatmap[[y, x]].clamp(0.0, 1.0);
        let color = colormap(heat);
        let mix = 0.5 * heat;
        Rgb(std::array::from_fn(|k| {
            (gray * (1.0 - mix) + color[k] * mix).round() as u8
        }))
    }))
}

/// Places panels left to right, separated by a white two-pixel gutter.
pub fn side_by_side(panels: &[RgbImage]) -> Result<RgbImage> {
    let Some(first) = panels.first() else {
        return Err(Error::Invalid("no panels to combine".into()));
    };
    let height = first.height();
    if panels.iter().any(|p| p.height() != height) {
        return Err(Error::Shape("panels differ in height".into()));
    }
    const GUTTER: u32 = 2;
    let width =
        panels.iter().map(RgbImage::width).sum::<u32>() + GUTTER * (panels.len() as u32 - 1);
    let mut out = RgbImage::from_pixel(width, height, Rgb([255, 255, 255]));
    let mut x0 = 0;
    for p in panels {
        image::imageops::replace(&mut out, p, i64::from(x0), 0);
        x0 += p.width() + GUTTER;
    }
    Ok(out)
}

pub fn save_rgb(img: &RgbImage, path: &Path) -> Result<()> {
    img.save(path).map_err(|source| Error::Image {
        path: path.to_path_buf(),
        source,
    })
}
