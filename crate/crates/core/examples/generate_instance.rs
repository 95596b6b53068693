//! Builds the toy hydro-thermal instance and a tiny inventory instance,
//! prints their sizes and round-trips them through the JSON format.

use risksddp::model::{generate_hydrothermal, tiny_instance, HydroParams, SocProblem, TinyFamily};

fn describe(name: &str, p: &SocProblem) {
    println!(
        "{name}: T = {}, state dims {:?}, control dims {:?}, realizations per stage {:?}, scenarios {}",
        p.num_stages(),
        p.state_dims,
        p.control_dims,
        (0..p.num_stages()).map(|t| p.num_realizations(t)).collect::<Vec<_>>(),
        p.scenario_count(),
    );
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let hydro = generate_hydrothermal(&HydroParams::default())?;
    describe("hydro", &hydro);
    let tiny = tiny_instance(TinyFamily::Inventory2, 3, 2);
    describe("inventory2", &tiny);

    let dir = std::env::temp_dir().join("risksddp-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("hydro.json");
    hydro.save(&path)?;
    let back = SocProblem::load(&path)?;
    assert_eq!(back, hydro);
    println!("saved and reloaded {}", path.display());
    Ok(())
}
