//! Writes and re-reads images and dictionaries in the supported formats.

use spda::io::{read_dictionary, read_image, write_dictionary, write_image};
use spda::learning::init_dictionary_dct;
use spda::testimage::{make_test_image, TestImageKind};

fn main() -> spda::Result<()> {
    let dir = std::env::temp_dir().join("spda-image-io");
    std::fs::create_dir_all(&dir).map_err(|e| spda::Error::Internal(e.to_string()))?;
    let img = spda::image::scale_to_peak(&make_test_image(TestImageKind::FlagLike, 32)?, 1000.0)?;

    let pgm = dir.join("flag.pgm");
    write_image(&pgm, &img)?;
    let back = read_image(&pgm)?;
    println!("PGM: {:?}, max {} (16-bit, rounded)", back.dims(), back.max());

    let grid = dir.join("flag.txt");
    write_image(&grid, &img)?;
    println!("float grid round trip exact: {}", read_image(&grid)? == img);

    let dict = init_dictionary_dct(4)?;
    let path = dir.join("dct4.dict");
    write_dictionary(&path, &dict)?;
    println!("dictionary round trip exact: {}", read_dictionary(&path)? == dict);
    println!("files in {}", dir.display());
    Ok(())
}
