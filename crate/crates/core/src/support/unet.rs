//! Single-precision forward pass of the support-extraction U-Net.
//!
//! Encoder levels of widths 32, 64, 128 (two 3×3 conv + ReLU each, 2×2 max
//! pool between levels), a 256-channel bottleneck, and a mirrored decoder:
//! nearest 2× upsample, 3×3 conv + ReLU, concatenation `[upsampled, skip]`
//! along channels, two 3×3 conv + ReLU. A 1×1 conv and a sigmoid give one
//! output channel. No normalization layers.

use ndarray::Array2;
use rayon::prelude::*;

use super::weights::{NetworkWeights, Tensor};
use crate::error::{Error, Result};

const WIDTHS: [usize; 3] = [32, 64, 128];
const BOTTLENECK: usize = 256;

/// Layer names and shapes of the network, in file order.
pub fn architecture() -> Vec<(String, Vec<usize>)> {
    let mut out = Vec::new();
    let mut conv = |name: String, cout: usize, cin: usize, k: usize| {
        out.push((format!("{name}.weight"), vec![cout, cin, k, k]));
        out.push((format!("{name}.bias"), vec![cout]));
    };
    let mut cin = 1;
    for (l, &w) in WIDTHS.iter().enumerate() {
        conv(format!("enc{}.conv1", l + 1), w, cin, 3);
        conv(format!("enc{}.conv2", l + 1), w, w, 3);
        cin = w;
    }
    conv("bottleneck.conv1".into(), BOTTLENECK, cin, 3);
    conv("bottleneck.conv2".into(), BOTTLENECK, BOTTLENECK, 3);
    cin = BOTTLENECK;
    for l in (0..WIDTHS.len()).rev() {
        let w = WIDTHS[l];
        conv(format!("dec{}.up", l + 1), w, cin, 3);
        conv(format!("dec{}.conv1", l + 1), w, 2 * w, 3);
        conv(format!("dec{}.conv2", l + 1), w, w, 3);
        cin = w;
    }
    conv("head".into(), 1, cin, 1);
    out
}

/// Channel-major feature map.
#[derive(Clone)]
struct Fmap {
    c: usize,
    h: usize,
    w: usize,
    data: Vec<f32>,
}

impl Fmap {
    fn plane(&self, c: usize) -> &[f32] {
        &self.data[c * self.h * self.w..(c + 1) * self.h * self.w]
    }
}

fn conv(x: &Fmap, weight: &Tensor, bias: &Tensor, relu: bool) -> Fmap {
    let (cout, cin, k) = (weight.shape[0], weight.shape[1], weight.shape[2]);
    debug_assert_eq!(cin, x.c);
    let (h, w) = (x.h, x.w);
    let pad = k / 2;
    let planes: Vec<Vec<f32>> = (0..cout)
        .into_par_iter()
        .map(|co| {
            let mut o = vec![bias.data[co]; h * w];
            for ci in 0..cin {
                let xin = x.plane(ci);
                let wk = &weight.data[(co * cin + ci) * k * k..(co * cin + ci + 1) * k * k];
                for dy in 0..k {
                    let ylo = pad.saturating_sub(dy);
                    let yhi = (h + pad).saturating_sub(dy).min(h);
                    for dx in 0..k {
                        let wv = wk[dy * k + dx];
                        let xlo = pad.saturating_sub(dx);
                        let xhi = (w + pad).saturating_sub(dx).min(w);
                        for y in ylo..yhi {
                            let sy = y + dy - pad;
                            let src = &xin[sy * w + xlo + dx - pad..sy * w + xhi + dx - pad];
                            let dst = &mut o[y * w + xlo..y * w + xhi];
                            for (d, s) in dst.iter_mut().zip(src) {
                                *d += wv * s;
                            }
                        }
                    }
                }
            }
            if relu {
                o.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            o
        })
        .collect();
    Fmap {
        c: cout,
        h,
        w,
        data: planes.concat(),
    }
}

fn maxpool(x: &Fmap) -> Fmap {
    let (h, w) = (x.h / 2, x.w / 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        let p = x.plane(c);
        for y in 0..h {
            for z in 0..w {
                let a = p[2 * y * x.w + 2 * z];
                let b = p[2 * y * x.w + 2 * z + 1];
                let cc = p[(2 * y + 1) * x.w + 2 * z];
                let d = p[(2 * y + 1) * x.w + 2 * z + 1];
                data.push(a.max(b).max(cc.max(d)));
            }
        }
    }
    Fmap { c: x.c, h, w, data }
}

fn upsample(x: &Fmap) -> Fmap {
    let (h, w) = (x.h * 2, x.w * 2);
    let mut data = Vec::with_capacity(x.c * h * w);
    for c in 0..x.c {
        let p = x.plane(c);
        for y in 0..h {
            for z in 0..w {
                data.push(p[(y / 2) * x.w + z / 2]);
            }
        }
    }
    Fmap { c: x.c, h, w, data }
}

fn concat(a: Fmap, b: &Fmap) -> Fmap {
    let mut data = a.data;
    data.extend_from_slice(&b.data);
    Fmap {
        c: a.c + b.c,
        h: a.h,
        w: a.w,
        data,
    }
}

/// Validated network ready for inference.
#[derive(Clone, Debug)]
pub struct UNet {
    weights: NetworkWeights,
}

impl UNet {
    /// Fails with the first layer whose name or shape departs from [`architecture`].
    pub fn new(weights: NetworkWeights) -> Result<Self> {
        weights.validate(&architecture())?;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &NetworkWeights {
        &self.weights
    }

    fn layer(&self, name: &str) -> (&Tensor, &Tensor) {
        let w = self.weights.get(&format!("{name}.weight")).expect("validated");
        let b = self.weights.get(&format!("{name}.bias")).expect("validated");
        (w, b)
    }

    fn conv(&self, x: &Fmap, name: &str, relu: bool) -> Fmap {
        let (w, b) = self.layer(name);
        conv(x, w, b, relu)
    }

    /// Output in `[0, 1]`, same shape as the input. Side lengths must be multiples of 8.
    pub fn infer(&self, input: &Array2<f32>) -> Result<Array2<f32>> {
        let (h, w) = input.dim();
        if h % 8 != 0 || w % 8 != 0 || h == 0 || w == 0 {
            return Err(Error::invalid(format!("network input must have sides divisible by 8, got {h}x{w}")));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("network input has non-finite entries"));
        }
        let mut x = Fmap {
            c: 1,
            h,
            w,
            data: input.iter().copied().collect(),
        };
        let mut skips = Vec::new();
        for l in 1..=WIDTHS.len() {
            x = self.conv(&x, &format!("enc{l}.conv1"), true);
            x = self.conv(&x, &format!("enc{l}.conv2"), true);
            let pooled = maxpool(&x);
            skips.push(x);
            x = pooled;
        }
        x = self.conv(&x, "bottleneck.conv1", true);
        x = self.conv(&x, "bottleneck.conv2", true);
        for l in (1..=WIDTHS.len()).rev() {
            let up = self.conv(&upsample(&x), &format!("dec{l}.up"), true);
            let skip = skips.pop().expect("one skip per level");
            x = concat(up, &skip);
            x = self.conv(&x, &format!("dec{l}.conv1"), true);
            x = self.conv(&x, &format!("dec{l}.conv2"), true);
        }
        let out = self.conv(&x, "head", false);
        let data = out.data.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect();
        Ok(Array2::from_shape_vec((h, w), data).expect("shape preserved"))
    }
}

/// Forward pass with weights checked against the architecture.
pub fn unet_infer(weights: &NetworkWeights, input: &Array2<f32>) -> Result<Array2<f32>> {
    UNet::new(weights.clone())?.infer(input)
}

/// Deterministic weights from integer arithmetic, reproducible outside Rust:
/// layer `l`, flat index `e`, fan-in `f`:
/// weight `((7919 e + 104729 l) mod 2001 − 1000) / 1000 · √(6 / f)`,
/// bias `((31 e + 17 l) mod 21 − 10) / 100`.
pub fn synthetic_weights() -> NetworkWeights {
    let layers = architecture()
        .into_iter()
        .enumerate()
        .map(|(l, (name, shape))| {
            let n: usize = shape.iter().product();
            let data = if shape.len() == 1 {
                (0..n)
                    .map(|e| (((31 * e + 17 * l) % 21) as f64 - 10.0) / 100.0)
                    .map(|v| v as f32)
                    .collect()
            } else {
                let fan_in = (shape[1] * shape[2] * shape[3]) as f64;
                let scale = (6.0 / fan_in).sqrt();
                (0..n)
                    .map(|e| ((((7919 * e + 104729 * l) % 2001) as f64 - 1000.0) / 1000.0 * scale) as f32)
                    .collect()
            };
            Tensor::new(name, shape, data).expect("shape matches data")
        })
        .collect();
    NetworkWeights::new(layers)
}
