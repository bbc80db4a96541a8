use std::sync::Arc;

use bytefs_core::fs::{fsck, FileKind, MkfsParams};
use bytefs_core::{
    Category, DeviceConfig, Error, FileSystem, JournalMode, Mode, MountOptions, Mssd,
};

fn fresh(mode: Mode) -> (Arc<Mssd>, FileSystem) {
    let dev = Arc::new(Mssd::new(DeviceConfig::desk()).unwrap());
    FileSystem::mkfs(&dev, mode, JournalMode::Ordered, MkfsParams::default()).unwrap();
    let fs = FileSystem::mount(dev.clone(), MountOptions::with_mode(mode)).unwrap();
    (dev, fs)
}

#[test]
fn create_write_read_remount_all_modes() {
    for mode in Mode::ALL {
        let (dev, fs) = fresh(mode);
        fs.mkdir("/d").unwrap();
        let ino = fs.create("/d/f").unwrap();
        let data: Vec<u8> = (0..10_000u32).map(|i| (i % 251) as u8).collect();
        fs.write(ino, 100, &data).unwrap();
        assert_eq!(fs.read(ino, 100, 10_000).unwrap(), data);
        fs.fsync(ino).unwrap();
        assert_eq!(fs.stat("/d/f").unwrap().size, 10_100);
        fs.unmount().unwrap();
        let fs = FileSystem::mount(dev.clone(), MountOptions::with_mode(mode)).unwrap();
        let ino = fs.lookup("/d/f").unwrap();
        let back = fs.read(ino, 0, 20_000).unwrap();
        assert_eq!(back.len(), 10_100);
        assert_eq!(&back[100..], &data[..], "{mode}");
        assert!(back[..100].iter().all(|&b| b == 0));
        assert_eq!(fsck(&dev).unwrap(), Vec::<String>::new(), "{mode}");
    }
}

#[test]
fn create_metadata_is_320_bytes_in_full_mode() {
    let (dev, fs) = fresh(Mode::Full);
    fs.create("/warm").unwrap();
    let before = dev.traffic_snapshot();
    fs.create("/a").unwrap();
    let d = dev.traffic_snapshot().since(&before);
    let meta: u64 = [Category::Bitmap, Category::Inode, Category::Dentry]
        .iter()
        .map(|c| d.host_to_ssd.get(*c))
        .sum();
    assert_eq!(meta, 320);
    assert_eq!(d.host_to_ssd.get(Category::Bitmap), 64);
    assert_eq!(d.host_to_ssd.get(Category::Inode), 192);
    assert_eq!(d.host_to_ssd.get(Category::Dentry), 64);
}

#[test]
fn namespace_errors() {
    let (_dev, fs) = fresh(Mode::Full);
    fs.mkdir("/a").unwrap();
    fs.create("/a/f").unwrap();
    assert!(matches!(fs.create("/a/f"), Err(Error::AlreadyExists(_))));
    assert!(matches!(fs.rmdir("/a"), Err(Error::NotEmpty(_))));
    assert!(matches!(fs.unlink("/a"), Err(Error::IsADirectory(_))));
    assert!(matches!(fs.rmdir("/a/f"), Err(Error::NotADirectory(_))));
    assert!(matches!(fs.create("/a/f/g"), Err(Error::NotADirectory(_))));
    assert!(matches!(fs.create("/x/g"), Err(Error::NotFound(_))));
    fs.rename("/a/f", "/g").unwrap();
    assert_eq!(
        fs.readdir("/")
            .unwrap()
            .iter()
            .map(|e| e.0.as_str())
            .collect::<Vec<_>>(),
        ["a", "g"]
    );
    assert_eq!(fs.readdir("/").unwrap()[0].2, FileKind::Dir);
    fs.rmdir("/a").unwrap();
    assert_eq!(fs.stat("/").unwrap().links, 2);
}
