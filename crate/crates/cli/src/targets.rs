//! Built-in target functions, one per function class.

use clap::ValueEnum;
use knet::{ExactRational, Point};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// x₁·x₂·…·x_d
    Product,
    /// x₁ + … + x_d
    Sum,
    /// 1 where x₁ < 1/2, else 0
    Indicator,
    /// 1 / (x₁ + … + x_d + 1/1000)
    Reciprocal,
}

impl Target {
    pub fn eval(self, x: &Point) -> ExactRational {
        let coords = x.coords();
        match self {
            Target::Product => coords.iter().fold(ExactRational::one(), |acc, c| acc * c),
            Target::Sum => coords.iter().sum(),
            Target::Indicator => {
                if coords[0] < ExactRational::ratio(1, 2) {
                    ExactRational::one()
                } else {
                    ExactRational::zero()
                }
            }
            Target::Reciprocal => {
                let s: ExactRational = coords.iter().sum();
                (s + ExactRational::ratio(1, 1000))
                    .recip()
                    .expect("positive denominator")
            }
        }
    }
}
