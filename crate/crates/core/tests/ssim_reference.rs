#[path = "support/ssim_reference.rs"]
mod ssim_reference;

#[test]
fn ssim_matches_scikit_image() {
    let d = ssim_reference::max_deviation();
    assert!(d <= 1e-4, "max deviation {d}");
}

#[test]
fn generated_pairs_vary_in_size() {
    let dims: Vec<_> = (0..10).map(|s| ssim_reference::pair(s).0.dims()).collect();
    assert!(dims.windows(2).any(|w| w[0] != w[1]));
}
