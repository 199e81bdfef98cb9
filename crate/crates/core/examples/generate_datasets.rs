//! Generates every synthetic dataset, writes it to a temporary directory
//! and reads it back.

use roarbench::data::{
    gen_keyword_lookup, gen_leakage_probe, gen_paired_lookup, gen_tabular, load_dataset, load_tabular, save_dataset,
    save_tabular, KeywordParams, LeakageParams, PairedParams, SplitSizes, TabularParams,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = std::env::temp_dir().join(format!("roarbench-gen-{}", std::process::id()));
    let splits = SplitSizes { train: 200, validation: 50, test: 50 };
    let sets = [
        ("keyword", gen_keyword_lookup(&KeywordParams { splits, seed: 1, ..KeywordParams::default() })?),
        ("keyword_redundant", gen_keyword_lookup(&KeywordParams { splits, redundancy: 2, seed: 1, ..KeywordParams::default() })?),
        ("paired", gen_paired_lookup(&PairedParams { splits, seed: 1, ..PairedParams::default() })?),
        ("leakage", gen_leakage_probe(&LeakageParams { splits, seed: 1, ..LeakageParams::default() })?),
    ];
    for (name, ds) in &sets {
        let dir = root.join(name);
        save_dataset(ds, &dir)?;
        let back = load_dataset(&dir)?;
        assert_eq!(back.content_hash(), ds.content_hash());
        println!("{name:<18} vocab {:>3}  classes {}  hash {}", ds.vocab.len(), ds.num_classes, &ds.content_hash()[..16]);
        println!("{:<18} {}", "", ds.decode(&ds.train[0].tokens).join(" "));
        if let Some(aux) = &ds.train[0].aux_tokens {
            println!("{:<18} {}", "", ds.decode(aux).join(" "));
        }
    }

    let tab = gen_tabular(&TabularParams { seed: 1, ..TabularParams::default() })?;
    save_tabular(&tab, &root.join("tabular"))?;
    let back = load_tabular(&root.join("tabular"))?;
    println!("tabular            {} train rows, ground-truth order {:?}", back.train.len(), tab.ground_truth_order());
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
