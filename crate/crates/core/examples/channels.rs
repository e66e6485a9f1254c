//! Draws a deployment and its correlated channels, then shows how the SIM
//! phases reshape the effective channel gains.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use simcf::channel::{effective_channels, sample_channels, sample_scenario, spatial_covariance};
use simcf::sim::{build_stack, Direction};
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let config = SystemConfig::default();
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let scen = sample_scenario(&config, &mut rng)?;
    for (i, p) in scen.ap_positions.iter().enumerate() {
        println!("AP {i} at ({:7.2}, {:7.2}) m", p[0], p[1]);
    }
    for (k, p) in scen.ue_positions.iter().enumerate() {
        let db: Vec<String> = scen.pathloss[k]
            .iter()
            .map(|b| format!("{:6.1}", 10.0 * b.log10()))
            .collect();
        println!(
            "UE {k} at ({:7.2}, {:7.2}) m, pathloss [{}] dB",
            p[0],
            p[1],
            db.join(" ")
        );
    }
    let cov = spatial_covariance(&config.geometry()?);
    println!("R(0,1) = {:.4} between neighbouring atoms", cov[(0, 1)]);
    let ch = sample_channels(&scen, &cov, &mut rng)?;
    println!("channel digest {}", ch.digest());

    let stack = build_stack(&config.geometry()?, config.num_aps, 3)?;
    for dir in [Direction::Uplink, Direction::Downlink] {
        let eff = effective_channels(&ch, &stack, stack.initial_phases(dir), dir)?;
        let raw: f64 = ch.get(dir).iter().flatten().map(|h| h.norm_squared()).sum();
        let post: f64 = eff.vectors.iter().flatten().map(|h| h.norm_squared()).sum();
        println!("{dir}: total raw gain {raw:.3e}, effective gain through the SIM {post:.3e}");
    }
    if let Some(dir) = std::env::args().nth(1) {
        ch.write_csv(std::path::Path::new(&dir))?;
        println!("wrote channel CSVs to {dir}");
    }
    Ok(())
}
