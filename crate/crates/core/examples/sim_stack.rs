//! Builds the SIM of the default configuration and inspects its cascaded
//! transfer matrices.

use simcf::sim::{
    build_stack, diffraction_coefficient, wave_transfer_phases, Direction, PhaseProfile,
};
use simcf::SystemConfig;

fn main() -> simcf::Result<()> {
    let config = SystemConfig::default();
    let geom = config.geometry()?;
    println!(
        "λ = {:.3} mm, {} layers of {}x{} atoms, layer spacing {:.3} mm",
        geom.wavelength * 1e3,
        geom.layers,
        geom.atom_rows,
        geom.atom_cols,
        geom.layer_spacing() * 1e3
    );
    let a = geom.atom_positions(1);
    let b = geom.atom_positions(2);
    let w = diffraction_coefficient(&geom, &a[0], &b[0])?;
    let w_far = diffraction_coefficient(&geom, &a[0], &b[geom.atoms() - 1])?;
    println!(
        "facing atoms |w| = {:.4}, opposite corners |w| = {:.4}",
        w.norm(),
        w_far.norm()
    );

    let stack = build_stack(&geom, config.num_aps, 11)?;
    let zero = PhaseProfile::zeros(config.num_aps, geom.layers, geom.atoms());
    for dir in [Direction::Uplink, Direction::Downlink] {
        let g = wave_transfer_phases(&stack, &zero, 0, dir)?;
        let t = stack.coupling(dir);
        let front = if dir == Direction::Uplink {
            t * &g
        } else {
            &g * t
        };
        println!(
            "{dir}: G is {}x{}, ||G||_F = {:.4}, front end {}x{} with ||·||_F = {:.4}",
            g.nrows(),
            g.ncols(),
            g.norm(),
            front.nrows(),
            front.ncols(),
            front.norm()
        );
    }
    let ul = wave_transfer_phases(&stack, &zero, 0, Direction::Uplink)?;
    let dl = wave_transfer_phases(&stack, &zero, 0, Direction::Downlink)?;
    println!(
        "uplink/downlink reciprocity error ||G_ul - G_dlᵀ|| = {:.2e}",
        (&ul - dl.transpose()).norm()
    );
    Ok(())
}
