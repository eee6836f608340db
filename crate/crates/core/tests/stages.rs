use strav_core::alignment::AlignmentMode;
use strav_core::pipeline::{MemoryStore, Pipeline, PipelineConfig};
use strav_core::residual::AssemblyMode;
use strav_core::synthgen;
use strav_core::Frame;

fn run(suite: &str, seed: u64, mode: AssemblyMode, capture: bool) -> MemoryStore {
    let spec = synthgen::suite(suite, seed, (40, 48), 4, 5).unwrap();
    let seq = synthgen::generate(&spec).unwrap();
    let frames = seq.frames.iter().map(|f| f.frame.clone()).collect();
    let masks = seq.frames.iter().map(|f| f.mask.clone()).collect();
    let mut store = MemoryStore::new(frames, masks).unwrap();
    if capture {
        store = store.capture_stages();
    }
    let cfg = PipelineConfig { assembly: mode, alignment: AlignmentMode::Joint, ..Default::default() };
    Pipeline::new(cfg).unwrap().run(&mut store).unwrap();
    store
}

fn outputs(store: &MemoryStore) -> Vec<Frame> {
    store.outputs().into_iter().cloned().collect()
}

#[test]
fn captured_stages_equal_separate_runs() {
    let mut spatial_used = false;
    for (suite, seed) in [("pan", 3), ("local-deform", 1), ("no-coverage", 2)] {
        let full = run(suite, seed, AssemblyMode::TemporalSpatial, true);
        let stages: Vec<_> = full.stages.as_ref().unwrap().iter().map(|s| s.clone().unwrap()).collect();
        let bil = outputs(&run(suite, seed, AssemblyMode::Bilinear, false));
        let tmp = outputs(&run(suite, seed, AssemblyMode::Temporal, false));
        let ts = outputs(&full);
        for (k, st) in stages.iter().enumerate() {
            assert_eq!(st.bilinear, bil[k], "{suite} {seed} bilinear frame {k}");
            assert_eq!(st.temporal, tmp[k], "{suite} {seed} temporal frame {k}");
            assert_eq!(st.result, ts[k], "{suite} {seed} result frame {k}");
            spatial_used |= st.result != st.temporal;
        }
    }
    assert!(spatial_used);
}

#[test]
fn stages_are_not_captured_by_default() {
    let store = run("pan", 0, AssemblyMode::TemporalSpatial, false);
    assert!(store.stages.is_none());
}
