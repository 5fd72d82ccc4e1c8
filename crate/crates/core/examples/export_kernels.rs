//! Writes the conv1 kernels of a fresh MNIST baseline as a PGM mosaic.
//!
//! `cargo run --example export_kernels -- out.pgm`

use dcck::checkpoint::export_kernel_grid;
use dcck::layers::{InitConfig, LayerSpec, Network};

fn main() -> dcck::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "conv1.pgm".into());
    let net = Network::from_spec([1, 28, 28], &LayerSpec::mnist_baseline(100), InitConfig::default(), 1)?;
    let grid = export_kernel_grid(&net, 0, out.as_ref())?;
    println!("{}x{} mosaic written to {out}", grid.width, grid.height);
    Ok(())
}
