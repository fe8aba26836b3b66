use genexp::graphdata::{gen_ba2motifs, gen_ba_multishapes, split, write_graphs_string};
use genexp::Split;

use super::Ctx;
use crate::config::Generator;
use crate::error::{usage, CliResult};
use crate::fsutil::atomic_write;
use crate::GenDataArgs;

pub fn run(mut ctx: Ctx, args: GenDataArgs) -> CliResult<()> {
    let spec = &mut ctx.config.dataset;
    let name = args
        .dataset
        .or(spec.generator.take())
        .ok_or_else(|| usage("no dataset generator given (use --dataset)"))?;
    let generator = Generator::parse(&name)?;
    let count = args.count.or(spec.count).unwrap_or(1000);
    if count == 0 {
        return Err(usage("--count must be positive"));
    }
    let seed = args.seed.or(spec.seed).or(ctx.config.seed).ok_or_else(|| usage("no seed given (use --seed)"))?;
    let split_kind = args.split.unwrap_or(spec.split);
    spec.generator = Some(generator.name().to_string());
    spec.count = Some(count);
    spec.seed = Some(seed);
    spec.split = split_kind;

    let raw = match generator {
        Generator::Ba2Motifs => gen_ba2motifs(count, seed)?,
        Generator::BaMultiShapes => gen_ba_multishapes(count, seed)?,
    };
    let ds = split(&raw, split_kind.plan(), seed)?;
    let out = ctx.out_path(args.out.as_deref(), &format!("{}-{seed}.json", generator.name()));
    ctx.config.dataset.path = Some(out.clone());
    atomic_write(&out, write_graphs_string(&ds).as_bytes())?;
    ctx.snapshot(&out)?;

    // Edge counts follow the convention of counting both directions.
    let s = ds.stats();
    println!("dataset        {}", ds.name);
    println!("graphs         {}", s.graphs);
    println!("avg nodes      {:.2}", s.avg_nodes);
    println!("avg edges      {:.2}", s.avg_directed_edges);
    println!("classes        {}", s.classes);
    println!("node features  {}", s.node_features);
    let parts: Vec<String> = [Split::Train, Split::Val, Split::Test, Split::Unseen]
        .into_iter()
        .map(|p| (p, ds.indices(p).len()))
        .filter(|(_, n)| *n > 0)
        .map(|(p, n)| format!("{} {n}", p.as_str()))
        .collect();
    println!("splits         {}", parts.join(", "));
    println!("wrote {}", out.display());
    Ok(())
}
