//! One function per subcommand. Each stage reads the files the previous
//! stage left in the output directory.

use std::path::{Path, PathBuf};

use bgm_core::dataset::{events_to_ratings, ingest_ratings, EventLog};
use bgm_core::eval::{generate_synthetic, run_benchmark};
use bgm_core::graph::ForestOptions;
use bgm_core::matching::{load_bridges, save_bridges};
use bgm_core::recommend::{recommend_top_n, save_recommendations};
use bgm_core::training::{build_training_set, load_training, save_training};
use bgm_core::tree::{load_trees, save_trees};
use bgm_core::{
    build_forest, build_trees, expand_items, match_forests, train, BehaviorForest, ContentCatalog, CrossDomainData,
    Error, MatchOptions, Model, RatingMatrix, Result,
};

use crate::config::PipelineConfig;

pub struct Stage<'a> {
    pub config: &'a PipelineConfig,
    pub out: PathBuf,
}

fn progress(msg: impl AsRef<str>) {
    eprintln!("bgm: {}", msg.as_ref());
}

impl Stage<'_> {
    fn file(&self, name: impl AsRef<str>) -> PathBuf {
        self.out.join(name.as_ref())
    }

    fn ratings(&self, domain: &str) -> Result<RatingMatrix> {
        let k = self.config.domain(domain)?.k;
        ingest_ratings(&self.file(format!("{domain}_ratings.csv")), domain, k)
    }

    fn content(&self, domain: &str) -> Result<ContentCatalog> {
        ContentCatalog::load(&self.file(format!("{domain}_content.csv")), domain)
    }

    fn forest(&self, domain: &str, matrix: &RatingMatrix) -> Result<BehaviorForest> {
        BehaviorForest::load(
            &self.file(format!("{domain}_nodes.csv")),
            &self.file(format!("{domain}_edges.csv")),
            matrix,
            self.config.threshold,
        )
    }

    fn domains(&self) -> Result<Vec<&'static str>> {
        let names: Vec<_> = self.config.domains().into_iter().map(|(n, _)| n).collect();
        if names.is_empty() {
            return Err(Error::Config("missing field `source`".into()));
        }
        Ok(names)
    }

    fn create_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).map_err(|source| Error::Io { path: self.out.clone(), source })
    }

    pub fn ingest(&self) -> Result<()> {
        self.create_out()?;
        for (name, d) in self.config.domains() {
            let matrix = match (&d.ratings, &d.events) {
                (Some(path), _) => ingest_ratings(path, name, d.k)?,
                (None, Some(path)) => events_to_ratings(&EventLog::load(path)?, &self.config.event_weights, name, d.k)?,
                (None, None) => unreachable!("checked by validate"),
            };
            progress(format!("{name}: {} ratings from {} users", matrix.len(), matrix.user_set().len()));
            if let Some(path) = &d.content {
                let content = ContentCatalog::load(path, name)?;
                content.validate_covers(&matrix)?;
                content.save(&self.file(format!("{name}_content.csv")))?;
            }
            matrix.save(&self.file(format!("{name}_ratings.csv")))?;
        }
        self.domains().map(drop)
    }

    pub fn build_graphs(&self) -> Result<()> {
        let options = ForestOptions { drop_singletons: self.config.drop_singletons };
        for name in self.domains()? {
            let matrix = self.ratings(name)?;
            let forest = build_forest(name, &expand_items(&matrix), self.config.threshold, options)?;
            progress(format!(
                "{name}: {} nodes, {} edges, {} graphs",
                forest.node_count(),
                forest.edge_count(),
                forest.graphs.len()
            ));
            forest.save(&self.file(format!("{name}_nodes.csv")), &self.file(format!("{name}_edges.csv")))?;
        }
        Ok(())
    }

    pub fn build_trees(&self) -> Result<()> {
        for name in self.domains()? {
            let forest = self.forest(name, &self.ratings(name)?)?;
            let trees = build_trees(&forest)?;
            progress(format!("{name}: {} trees", trees.len()));
            save_trees(&trees, &self.file(format!("{name}_trees.csv")))?;
        }
        Ok(())
    }

    pub fn match_trees(&self) -> Result<()> {
        let mut trees = Vec::new();
        for name in ["source", "target"] {
            let forest = self.forest(name, &self.ratings(name)?)?;
            trees.push(load_trees(&self.file(format!("{name}_trees.csv")), &forest)?);
        }
        let options = MatchOptions { unique_tree_pairing: self.config.unique_tree_pairing };
        let bridges = match_forests(&trees[0], &trees[1], options);
        progress(format!("{} bridges", bridges.len()));
        save_bridges(&bridges, &self.file("bridges.csv"))
    }

    pub fn build_training(&self) -> Result<()> {
        let source = expand_items(&self.ratings("source")?);
        let target = expand_items(&self.ratings("target")?);
        let bridges = load_bridges(&self.file("bridges.csv"), &source, &target)?;
        let samples = build_training_set(&bridges, &self.content("source")?, &self.content("target")?)?;
        progress(format!("{} training samples", samples.len()));
        save_training(&samples, &self.file("training.csv"))
    }

    pub fn train(&self) -> Result<()> {
        let samples = load_training(&self.file("training.csv"))?;
        let (ks, kt) = (self.config.domain("source")?.k, self.config.domain("target")?.k);
        let model = train(&samples, ks, kt, &self.config.train_config())?;
        progress(format!("trained {:?} on {} samples", model.kind(), samples.len()));
        model.save(&self.file("model.json"))
    }

    pub fn recommend(&self) -> Result<()> {
        let model = Model::load(&self.file("model.json"))?;
        let source = self.ratings("source")?;
        let target = self.ratings("target")?;
        let (src_content, tgt_content) = (self.content("source")?, self.content("target")?);
        let users: Vec<String> = match &self.config.users {
            Some(users) => users.clone(),
            None => source.users().filter(|u| target.user_ratings(u).is_none()).cloned().collect(),
        };
        let mut rows = Vec::with_capacity(users.len());
        for user in users {
            let rated: Vec<_> = source
                .user_ratings(&user)
                .ok_or_else(|| Error::Validation(format!("user `{user}` has no source ratings")))?
                .iter()
                .map(|(item, &r)| (item.clone(), r))
                .collect();
            let seen = target.user_ratings(&user);
            let candidates: Vec<_> =
                tgt_content.items().filter(|i| seen.map_or(true, |s| !s.contains_key(*i))).cloned().collect();
            let list = recommend_top_n(&model, &rated, &candidates, &src_content, &tgt_content, self.config.top_n)?;
            rows.push((user, list));
        }
        progress(format!("recommended for {} users", rows.len()));
        save_recommendations(&rows, &self.file("recommendations.csv"))
    }

    pub fn evaluate(&self) -> Result<()> {
        let data = CrossDomainData {
            source: self.ratings("source")?,
            target: self.ratings("target")?,
            source_content: self.content("source")?,
            target_content: self.content("target")?,
        };
        data.validate()?;
        let report = run_benchmark(&data, &self.config.benchmark())?;
        progress(format!("evaluated {} users over {} folds", report.users.len(), report.folds));
        report.save(&self.out)
    }

    pub fn synth(&self) -> Result<()> {
        let generated = generate_synthetic(&self.config.synth_config()?)?;
        let d = &generated.data;
        progress(format!("synthetic: {} source and {} target ratings", d.source.len(), d.target.len()));
        generated.save(&self.out)
    }
}

pub fn output_dir(config: &PipelineConfig, override_dir: Option<&Path>) -> PathBuf {
    override_dir.map_or_else(|| config.output.clone(), Path::to_path_buf)
}
