from .benchmark import (
    ExternalMetric,
    ImageReport,
    MetricReport,
    read_pairs_csv,
    run_image_benchmark,
    run_similarity_benchmark,
    write_report,
)
from .chamfer import chamfer_l1, nearest_l1
from .images import image_rmse, image_ssim, luma, ssim_map
from .mesh import Mesh, MeshError, PointCloud, box_mesh, load_obj, normalize_mesh, sample_surface, save_obj
from .views import UnobservedError, select_representative_views, visible_counts

__all__ = [
    "ExternalMetric",
    "ImageReport",
    "Mesh",
    "MeshError",
    "MetricReport",
    "PointCloud",
    "UnobservedError",
    "box_mesh",
    "chamfer_l1",
    "image_rmse",
    "image_ssim",
    "load_obj",
    "luma",
    "nearest_l1",
    "normalize_mesh",
    "read_pairs_csv",
    "run_image_benchmark",
    "run_similarity_benchmark",
    "sample_surface",
    "save_obj",
    "select_representative_views",
    "ssim_map",
    "visible_counts",
    "write_report",
]
