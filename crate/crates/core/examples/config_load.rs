//! Loading and validating experiment configurations.

use tfspde::config::ExperimentConfig;

const MINIMAL: &str = r#"
seed = 7

[phi]
kind = "power"
s = 0.5

[exponents]
alpha = 0.5
sigma1 = 0.5
sigma2 = 0.6
p = 2.0
"#;

fn main() -> tfspde::Result<()> {
    let cfg = ExperimentConfig::from_toml_str(MINIMAL)?;
    println!("seed {} grid {:?} hash {}", cfg.seed, cfg.grid, cfg.hash());

    let broken = MINIMAL.replace("sigma2 = 0.6", "sigma2 = 0.75");
    match ExperimentConfig::from_toml_str(&broken) {
        Ok(_) => println!("unexpectedly accepted"),
        Err(e) => println!("rejected: {e}"),
    }
    let missing = MINIMAL.replace("[phi]\nkind = \"power\"\ns = 0.5\n", "");
    if let Err(e) = ExperimentConfig::from_toml_str(&missing) {
        println!("rejected: {e}");
    }
    Ok(())
}
