//! NIfTI and raw round trips, and axis-wise slicing of a case.

use tumorseg::testkit::{generate_dataset, DatasetSpec};
use tumorseg::volume::{
    assemble_volume, extract_slices, extract_volume_slices, read_nifti, read_raw, write_nifti, write_raw, Axis, Modality,
    RawDtype, VolumeKind,
};

fn main() -> tumorseg::Result<()> {
    let dir = std::env::temp_dir().join("tumorseg_volume_io");
    std::fs::create_dir_all(&dir)?;
    let case = generate_dataset(1, 5, &DatasetSpec::cube(24))?.remove(0);

    let t1 = case.modality(Modality::T1);
    write_nifti(t1, dir.join("t1.nii"))?;
    assert_eq!(&read_nifti(dir.join("t1.nii"), VolumeKind::Intensity)?, t1);

    let seg = case.truth().expect("phantom truth");
    write_raw(seg, RawDtype::Uint8, dir.join("seg.raw"))?;
    assert_eq!(&read_raw(dir.join("seg.raw"), VolumeKind::Label)?, seg);
    println!("NIfTI and raw round trips are bit-exact");

    for axis in Axis::ALL {
        let stack = extract_slices(&case, axis);
        let s = &stack.inputs[0];
        println!("{axis:?}: {} slices of {}x{} with {} channels", stack.inputs.len(), s.height, s.width, s.channels);
        let maps: Vec<Vec<f32>> = extract_volume_slices(t1, axis).into_iter().map(|s| s.data).collect();
        assert_eq!(&assemble_volume(&maps, axis, t1.dims(), t1.spacing(), VolumeKind::Intensity)?, t1);
    }
    Ok(())
}
