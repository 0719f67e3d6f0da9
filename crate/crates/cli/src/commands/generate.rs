use crate::config::{ensure_dir, Resolver};
use crate::{GenerateArgs, EXIT_OK};
use mechdis_core::error::Result;
use mechdis_core::synth::{generate_dataset, save_dataset, Variant};

pub fn run(args: GenerateArgs) -> Result<u8> {
    let cfg = Resolver::load(args.config.as_ref())?;
    let variant: Variant = cfg.require(args.variant, "variant")?.parse()?;
    let d_z = cfg.get(args.dz, "dz", 5);
    let d_x = cfg.get(args.dx, "dx", 2 * d_z);
    let n_seq = cfg.get(args.n_seq, "n-seq", 10_000);
    let t_len = cfg.get(args.t_len, "t-len", 2);
    let seed = cfg.seed(args.seed, 0);
    let out = cfg.path(args.out, "out")?;

    let (batch, meta, _process) = generate_dataset(variant, d_z, d_x, n_seq, t_len, seed)?;
    ensure_dir(&out)?;
    save_dataset(&batch, &meta, &out)?;
    println!(
        "wrote {} ({} sequences of length {t_len}, d_z={d_z}, d_x={d_x}, seed={seed})",
        out.display(),
        n_seq
    );
    Ok(EXIT_OK)
}
