//! Builds the synthetic summer day, perturbs it, and round-trips it through
//! the profile CSV format.

use dayahead::profiles::{format_profile, load_profile, perturb, save_profile, synthesize_default, PerturbationSpec};

fn main() -> anyhow::Result<()> {
    let base = synthesize_default();
    println!("hour  demand   price  solar_cf  wind_cf");
    for r in base.records() {
        println!("{:4} {:7.1} {:7.2} {:9.3} {:8.3}", r.hour, r.demand, r.price, r.solar_cf, r.wind_cf);
    }
    println!("peak demand {:.1} MWh", base.peak_demand());

    // Same seed, same day; a different seed gives a different day.
    let spec = PerturbationSpec::new(0.05, 7)?;
    let a = perturb(&base, &spec);
    let b = perturb(&base, &spec);
    let c = perturb(&base, &PerturbationSpec::new(0.05, 8)?);
    assert_eq!(a, b);
    assert_ne!(a, c);
    let max_rel = base
        .records()
        .iter()
        .zip(a.records())
        .map(|(x, y)| ((y.demand - x.demand) / x.demand).abs())
        .fold(0.0, f64::max);
    println!("largest demand change under 5% perturbation: {:.2}%", 100.0 * max_rel);

    let dir = std::env::temp_dir().join("dayahead-profile-tour");
    let path = dir.join("profile.csv");
    save_profile(&a, &path)?;
    let back = load_profile(&path)?;
    assert_eq!(format_profile(&back), format_profile(&a));
    println!("saved and reloaded {}", path.display());
    Ok(())
}
