//! Data loading, synthetic image generation and the benchmark harness behind
//! the `pdasgd` command-line tool.

pub mod bench;
pub mod error;
pub mod image;
pub mod io;

pub use bench::{run_benchmark, BenchOutput, BenchPlan, BenchRow};
pub use error::{CliError, Result};
pub use image::{
    gen_synthetic_image, image_to_instance, CostModel, ImageInstance, ImageSource, Square,
};
pub use io::{load_csv_matrix, load_idx, load_images, load_pgm, write_csv_matrix};
