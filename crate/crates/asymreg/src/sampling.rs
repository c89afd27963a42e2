//! Seeded pseudo-random samplers for audit inputs.
//!
//! All sampling flows through one ChaCha8 stream per `Sampler`, so a report
//! that records the seed pins down every sample it was computed from.

use rand::RngExt;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::spaces::{AxiomSample, Point, Space, SpaceError};

pub struct Sampler {
    rng: ChaCha8Rng,
    pub seed: u64,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler {
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
        }
    }

    pub fn unit(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// A point with coordinates in `[-radius, radius]` (euclid) or radial
    /// coordinate in `[0, radius]` on a uniform ray (tripod).
    pub fn point(&mut self, space: &Space, radius: f64) -> Result<Point, SpaceError> {
        Ok(match space {
            Space::Euclid { dim } => Point::Euclid(
                (0..*dim)
                    .map(|_| self.rng.random_range(-radius..=radius))
                    .collect(),
            ),
            Space::Tripod => {
                let ray = self.rng.random_range(0u8..3);
                Point::tripod(ray, self.rng.random_range(0.0..=radius))
            }
        })
    }

    pub fn pairs(
        &mut self,
        space: &Space,
        count: usize,
        radius: f64,
    ) -> Result<Vec<(Point, Point)>, SpaceError> {
        (0..count)
            .map(|_| Ok((self.point(space, radius)?, self.point(space, radius)?)))
            .collect()
    }

    pub fn points(
        &mut self,
        space: &Space,
        count: usize,
        radius: f64,
    ) -> Result<Vec<Point>, SpaceError> {
        (0..count).map(|_| self.point(space, radius)).collect()
    }

    pub fn axiom_samples(
        &mut self,
        space: &Space,
        count: usize,
        radius: f64,
    ) -> Result<Vec<AxiomSample>, SpaceError> {
        (0..count)
            .map(|_| {
                Ok(AxiomSample {
                    x: self.point(space, radius)?,
                    y: self.point(space, radius)?,
                    z: self.point(space, radius)?,
                    w: self.point(space, radius)?,
                    lambda: self.unit(),
                    lambda_tilde: self.unit(),
                })
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_samples() {
        let space = Space::euclid(3).unwrap();
        let a = Sampler::new(9).points(&space, 10, 2.0).unwrap();
        let b = Sampler::new(9).points(&space, 10, 2.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tripod_points_are_valid() {
        let space = Space::tripod();
        let mut s = Sampler::new(1);
        for _ in 0..100 {
            let p = s.point(&space, 3.0).unwrap();
            space.check_point(&p).unwrap();
        }
    }
}
