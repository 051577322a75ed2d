//! Renders a swarm-count raster in every supported format.
//!
//!     cargo run --example heatmap -- [out_dir]

use std::path::PathBuf;

use locustcast::grid::{CellIndex, GridSpec};
use locustcast::report::{write_raster, Raster, RasterFormat};

fn main() -> std::io::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("locustcast-heatmap"));
    std::fs::create_dir_all(&out)?;

    let spec = GridSpec {
        n_x: 40,
        n_y: 24,
        ..GridSpec::default()
    };
    let mut raster = Raster::for_grid(&spec);
    for y in 0..spec.n_y {
        for x in 0..spec.n_x {
            let d2 = (x as f64 - 25.0).powi(2) + (y as f64 - 15.0).powi(2);
            raster.set(CellIndex::new(x, y), 8.0 * (-d2 / 18.0).exp());
        }
    }
    println!("hot spot at {}", raster.argmax());
    for format in [
        RasterFormat::CsvGrid,
        RasterFormat::Pgm,
        RasterFormat::PpmDensity,
    ] {
        let path = out.join(format!("blob.{}", format.extension()));
        std::fs::write(&path, write_raster(&raster, format))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
