use anyhow::{Context, Result};

use prth_core::synth::{generate, write_csv_bundle};

use super::Ctx;

pub fn gen_data(ctx: &Ctx) -> Result<()> {
    let synth = ctx.config.synth_config()?;
    let dir = ctx.stage_dir("gen-data", None)?;
    let out = generate(&synth).context("synthetic generation failed")?;
    write_csv_bundle(&out, &dir).context("writing the CSV bundle failed")?;
    ctx.say(
        "gen-data",
        &format!(
            "{} links x {} days, realized failure rate {:.5}",
            synth.n_links, synth.n_days, out.realized_failure_rate
        ),
    );

    let mut manifest = ctx.manifest("gen-data", &dir, None);
    manifest.seed("data", synth.seed);
    for name in ["rl_kpi.csv", "ws.csv", "static.csv", "distances.csv", "ground_truth.json"] {
        manifest.output(&dir.join(name))?;
    }
    manifest.write()?;
    Ok(())
}
