/// Mixes a base seed with a purpose tag and an index into an independent stream seed.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix(base ^ 0x9e37_79b9_7f4a_7c15);
    for b in tag.bytes() {
        h = splitmix(h ^ b as u64);
    }
    splitmix(h ^ index.wrapping_mul(0xd1b5_4a32_d192_ed03))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
