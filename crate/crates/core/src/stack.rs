//! Layered latent vectors. Index 0 is the bottom layer (`z_1`), the last
//! index is the top layer (`z_L`).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    dims: Vec<usize>,
}

impl LayerSpec {
    /// `dims` is bottom layer first.
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::invalid(format!(
                "need at least two latent layers, got {}",
                dims.len()
            )));
        }
        if dims.iter().any(|&d| d == 0) {
            return Err(Error::invalid("latent layer dimensions must be positive"));
        }
        Ok(LayerSpec { dims })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self, layer: usize) -> usize {
        self.dims[layer]
    }

    pub fn total(&self) -> usize {
        self.dims.iter().sum()
    }

    pub fn top(&self) -> usize {
        self.dims.len() - 1
    }
}

macro_rules! layered {
    ($name:ident) => {
        #[derive(Clone, Debug, PartialEq)]
        pub struct $name {
            layers: Vec<Vec<f64>>,
        }

        impl $name {
            pub fn new(layers: Vec<Vec<f64>>) -> Self {
                $name { layers }
            }

            pub fn zeros(spec: &LayerSpec) -> Self {
                $name {
                    layers: spec.dims().iter().map(|&d| vec![0.0; d]).collect(),
                }
            }

            pub fn from_flat(spec: &LayerSpec, flat: &[f64]) -> Result<Self> {
                if flat.len() != spec.total() {
                    return Err(Error::shape(stringify!($name), spec.total(), flat.len()));
                }
                let mut off = 0;
                let layers = spec
                    .dims()
                    .iter()
                    .map(|&d| {
                        let v = flat[off..off + d].to_vec();
                        off += d;
                        v
                    })
                    .collect();
                Ok($name { layers })
            }

            pub fn layers(&self) -> &[Vec<f64>] {
                &self.layers
            }

            pub fn layers_mut(&mut self) -> &mut [Vec<f64>] {
                &mut self.layers
            }

            pub fn into_layers(self) -> Vec<Vec<f64>> {
                self.layers
            }

            pub fn layer(&self, i: usize) -> &[f64] {
                &self.layers[i]
            }

            pub fn num_layers(&self) -> usize {
                self.layers.len()
            }

            pub fn flatten(&self) -> Vec<f64> {
                self.layers.iter().flatten().copied().collect()
            }

            pub fn check(&self, spec: &LayerSpec) -> Result<()> {
                if self.layers.len() != spec.len() {
                    return Err(Error::shape(
                        concat!(stringify!($name), " layer count"),
                        spec.len(),
                        self.layers.len(),
                    ));
                }
                for (i, (l, &d)) in self.layers.iter().zip(spec.dims()).enumerate() {
                    if l.len() != d {
                        return Err(Error::shape(format!("{} layer {i}", stringify!($name)), d, l.len()));
                    }
                }
                Ok(())
            }

            pub fn is_finite(&self) -> bool {
                self.layers.iter().flatten().all(|v| v.is_finite())
            }

            pub fn norm(&self) -> f64 {
                self.layers.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
            }

            pub fn max_abs_diff(&self, other: &Self) -> f64 {
                self.layers
                    .iter()
                    .flatten()
                    .zip(other.layers.iter().flatten())
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            }
        }
    };
}

layered!(LatentStack);
layered!(UStack);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_validation() {
        assert!(LayerSpec::new(vec![3]).is_err());
        assert!(LayerSpec::new(vec![3, 0]).is_err());
        let s = LayerSpec::new(vec![8, 4, 2]).unwrap();
        assert_eq!(s.total(), 14);
        assert_eq!(s.top(), 2);
    }

    #[test]
    fn flat_layout_is_bottom_first() {
        let s = LayerSpec::new(vec![2, 1]).unwrap();
        let u = UStack::from_flat(&s, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(u.layer(0), &[1.0, 2.0]);
        assert_eq!(u.layer(1), &[3.0]);
        assert!(u.check(&s).is_ok());
        assert!(UStack::from_flat(&s, &[1.0]).is_err());
        assert!(UStack::new(vec![vec![1.0], vec![2.0]]).check(&s).is_err());
    }
}
