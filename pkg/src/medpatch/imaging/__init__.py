from medpatch.imaging.image import Image, ImageGeometry
from medpatch.imaging.io import SUPPORTED_EXTENSIONS, read_image, write_image
from medpatch.imaging.manifest import SubjectRecord, read_manifest

__all__ = ["Image", "ImageGeometry", "SUPPORTED_EXTENSIONS", "read_image", "write_image",
           "SubjectRecord", "read_manifest"]
