//! Synthetic mixtures, WAV I/O and mixture manifests.

pub mod manifest;
pub mod synth;
pub mod wav;

pub use manifest::{load_manifest, parse_manifest, save_manifest, LoadedManifest, Manifest, SeparationDefaults, StftSection};
pub use synth::{
    corpus_item_seed, overlap_fixture, random_mixture_spec, synth_corpus, synth_damped_mixture, with_layout,
    GroundTruth, MixtureSpec, Partial, Segment, SourceSpec, SynthConfig,
};
pub use wav::{load_wav, save_wav, SaveReport};
