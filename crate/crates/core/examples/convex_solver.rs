//! The log-barrier solver on two small programs with known answers.

use simcf::solver::{solve, ConcaveProgram, Disk, SolverSettings};

fn main() -> simcf::Result<()> {
    // max −||x − c||² s.t. ||x||² <= 1, c = (2, 1): x* = c / ||c||
    let c = [2.0, 1.0];
    let prog = ConcaveProgram::new(
        vec![0.0, 0.0],
        Box::new(move |x, g| {
            if let Some(g) = g {
                g[0] = -2.0 * (x[0] - c[0]);
                g[1] = -2.0 * (x[1] - c[1]);
            }
            -((x[0] - c[0]).powi(2) + (x[1] - c[1]).powi(2))
        }),
    )
    .with_constraint(
        "unit ball",
        Box::new(|x, g| {
            if let Some(g) = g {
                g[0] = 2.0 * x[0];
                g[1] = 2.0 * x[1];
            }
            x[0] * x[0] + x[1] * x[1] - 1.0
        }),
    );
    let sol = solve(&prog, &SolverSettings::default())?;
    let n = (c[0] * c[0] + c[1] * c[1]).sqrt();
    println!(
        "ball: x = ({:.6}, {:.6}), expected ({:.6}, {:.6}), {} iterations, slack {:.2e}",
        sol.x[0],
        sol.x[1],
        c[0] / n,
        c[1] / n,
        sol.iterations,
        sol.slacks[0]
    );

    // max Re(e^{-jπ/3} z) with |z| <= 1, handled by projection: z* = e^{jπ/3}
    let (s, co) = (
        std::f64::consts::FRAC_PI_3.sin(),
        std::f64::consts::FRAC_PI_3.cos(),
    );
    let mut prog = ConcaveProgram::new(
        vec![0.0, 0.0],
        Box::new(move |x, g| {
            if let Some(g) = g {
                g[0] = co;
                g[1] = s;
            }
            co * x[0] + s * x[1]
        }),
    );
    prog.disks.push(Disk {
        re: 0,
        im: 1,
        radius: 1.0,
    });
    let sol = solve(&prog, &SolverSettings::default())?;
    println!(
        "disk: z = {:.6} + {:.6}j, expected {co:.6} + {s:.6}j",
        sol.x[0], sol.x[1]
    );
    Ok(())
}
