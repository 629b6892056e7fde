//! Grayscale images as transport marginals.

use std::path::PathBuf;

use pdasgd_core::{CostMatrix, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, Result};

/// Placement of the bright square in a synthetic image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Square {
    pub top: usize,
    pub left: usize,
    pub side: usize,
}

impl Square {
    pub fn contains(&self, row: usize, col: usize) -> bool {
        (self.top..self.top + self.side).contains(&row)
            && (self.left..self.left + self.side).contains(&col)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    Synthetic {
        seed: u64,
        foreground: Option<Square>,
    },
    File(PathBuf),
}

/// Row-major grid of nonnegative intensities with at least one positive pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageInstance {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    source: ImageSource,
}

impl ImageInstance {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, source: ImageSource) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(CliError::Image(format!("empty {width}x{height} grid")));
        }
        if pixels.len() != width * height {
            return Err(CliError::Image(format!(
                "{} pixels for a {width}x{height} grid",
                pixels.len()
            )));
        }
        if let Some(i) = pixels.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(CliError::Image(format!("pixel {i} is {}", pixels[i])));
        }
        if !pixels.iter().any(|&p| p > 0.0) {
            return Err(CliError::Image("all pixels are zero".into()));
        }
        Ok(Self {
            width,
            height,
            pixels,
            source,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn source(&self) -> &ImageSource {
        &self.source
    }

    pub fn to_distribution(&self) -> Result<Distribution> {
        Ok(Distribution::from_mass(&self.pixels)?)
    }
}

/// Side of the foreground square: `floor(√(0.2 side²))`, so it covers at
/// most 20% of the image.
pub fn foreground_side(side: usize) -> Result<usize> {
    let k = (0.2 * (side * side) as f64).sqrt().floor() as usize;
    if side < 2 || k == 0 {
        return Err(CliError::Invalid(format!(
            "side {side} is too small to hold a foreground square"
        )));
    }
    Ok(k)
}

/// A `side × side` image with one uniformly placed square of `U[0, 10]`
/// intensities on a `U[0, 1]` background.
pub fn gen_synthetic_image(side: usize, seed: u64) -> Result<ImageInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    gen_synthetic_image_with(side, &mut rng, seed)
}

/// Same as [`gen_synthetic_image`] but draws from a caller-owned generator;
/// `seed` is only recorded in the image's source.
pub fn gen_synthetic_image_with<R: Rng>(
    side: usize,
    rng: &mut R,
    seed: u64,
) -> Result<ImageInstance> {
    let k = foreground_side(side)?;
    let square = Square {
        top: rng.random_range(0..=side - k),
        left: rng.random_range(0..=side - k),
        side: k,
    };
    let mut pixels = Vec::with_capacity(side * side);
    for r in 0..side {
        for c in 0..side {
            pixels.push(if square.contains(r, c) {
                rng.random_range(0.0..=10.0)
            } else {
                rng.random_range(0.0..=1.0)
            });
        }
    }
    ImageInstance::new(
        side,
        side,
        pixels,
        ImageSource::Synthetic {
            seed,
            foreground: Some(square),
        },
    )
}

/// Ground cost between pixels of two same-shape images.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostModel {
    /// Squared Euclidean distance between grid coordinates, divided by its
    /// maximum so that `‖C‖∞ = 1`.
    #[default]
    SquaredEuclideanGrid,
}

impl CostModel {
    pub fn cost_matrix(self, width: usize, height: usize) -> Result<CostMatrix> {
        match self {
            CostModel::SquaredEuclideanGrid => {
                let max = ((width - 1).pow(2) + (height - 1).pow(2)) as f64;
                let scale = if max > 0.0 { 1.0 / max } else { 0.0 };
                let n = width * height;
                Ok(CostMatrix::from_fn(n, |i, j| {
                    let dr = (i / width) as f64 - (j / width) as f64;
                    let dc = (i % width) as f64 - (j % width) as f64;
                    (dr * dr + dc * dc) * scale
                })?)
            }
        }
    }
}

/// Normalized pixel mass and the ground cost on the image's grid.
pub fn image_to_instance(
    img: &ImageInstance,
    cost_model: CostModel,
) -> Result<(Distribution, CostMatrix)> {
    Ok((
        img.to_distribution()?,
        cost_model.cost_matrix(img.width, img.height)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn foreground_square_sizes() {
        assert_eq!(foreground_side(10).unwrap(), 4);
        assert_eq!(foreground_side(28).unwrap(), 12);
        assert_eq!(foreground_side(3).unwrap(), 1);
        assert!(foreground_side(2).is_err());
        assert!(foreground_side(0).is_err());
    }

    #[test]
    fn square_is_inside_and_bright() {
        for seed in 0..50 {
            let img = gen_synthetic_image(10, seed).unwrap();
            let ImageSource::Synthetic {
                foreground: Some(sq),
                ..
            } = *img.source()
            else {
                panic!("synthetic image without a square");
            };
            assert_eq!(sq.side, 4);
            assert!(sq.top + sq.side <= 10 && sq.left + sq.side <= 10);
            for r in 0..10 {
                for c in 0..10 {
                    let p = img.get(r, c);
                    if sq.contains(r, c) {
                        assert!((0.0..=10.0).contains(&p));
                    } else {
                        assert!((0.0..=1.0).contains(&p));
                    }
                }
            }
        }
    }

    #[test]
    fn deterministic_per_seed() {
        assert_eq!(
            gen_synthetic_image(12, 9).unwrap(),
            gen_synthetic_image(12, 9).unwrap()
        );
        assert_ne!(
            gen_synthetic_image(12, 9).unwrap(),
            gen_synthetic_image(12, 10).unwrap()
        );
    }

    #[test]
    fn rejects_bad_pixels() {
        let src = ImageSource::Synthetic {
            seed: 0,
            foreground: None,
        };
        assert!(ImageInstance::new(2, 2, vec![0.0; 4], src.clone()).is_err());
        assert!(ImageInstance::new(2, 2, vec![1.0, -1.0, 0.0, 0.0], src.clone()).is_err());
        assert!(ImageInstance::new(2, 2, vec![1.0; 3], src.clone()).is_err());
        assert!(ImageInstance::new(0, 2, vec![], src).is_err());
    }

    #[test]
    fn single_pixel_and_uniform_images() {
        let src = ImageSource::Synthetic {
            seed: 0,
            foreground: None,
        };
        let mut px = vec![0.0; 9];
        px[4] = 3.0;
        let (d, _) = image_to_instance(
            &ImageInstance::new(3, 3, px, src.clone()).unwrap(),
            CostModel::default(),
        )
        .unwrap();
        assert_eq!(d.weights()[4], 1.0);
        assert_eq!(d.weights().iter().sum::<f64>(), 1.0);

        let (d, _) = image_to_instance(
            &ImageInstance::new(4, 2, vec![0.5; 8], src).unwrap(),
            CostModel::default(),
        )
        .unwrap();
        assert!(d.weights().iter().all(|&w| w == 0.125));
    }

    #[test]
    fn grid_cost_two_by_two() {
        let c = CostModel::SquaredEuclideanGrid.cost_matrix(2, 2).unwrap();
        assert_eq!(c.get(0, 3), 1.0);
        assert_eq!(c.get(1, 2), 1.0);
        assert_eq!(c.get(0, 1), 0.5);
        assert_eq!(c.get(2, 2), 0.0);
        assert_eq!(c.max_abs(), 1.0);
    }

    #[test]
    fn grid_cost_rectangular() {
        let c = CostModel::SquaredEuclideanGrid.cost_matrix(3, 2).unwrap();
        assert_eq!(c.n(), 6);
        assert_eq!(c.max_abs(), 1.0);
        assert_eq!(c.get(0, 5), 1.0);
        assert_eq!(c.get(0, 2), 0.8);
        for i in 0..6 {
            for j in 0..6 {
                assert_eq!(c.get(i, j), c.get(j, i));
            }
        }
    }
}
