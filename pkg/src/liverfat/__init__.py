"""Liver fat quantification on synthetic Dixon-style body MRI phantoms."""

from .volume import (
    BinaryMask,
    ResampleSpec,
    StationStack,
    Volume3,
    center_of_mass_index,
    erode_spherical,
    fuse_stations,
    intersect_masks,
    mask_dice,
    quantile_of_mass_index,
    resample,
    trilinear_sample,
)
from .phantom import (
    CohortSpec,
    PhantomSpec,
    PhantomTruth,
    generate_cohort,
    generate_phantom,
    reference_roi_measurement,
)
from .preprocess import (
    EncodingSpec,
    LayoutConfig,
    SliceImage,
    body_mask,
    compose_input,
    decode8,
    encode8,
    fat_fraction,
    otsu_threshold,
    select_slices,
)
from .atlas import (
    CalibrationModel,
    DeformationField,
    RegistrationConfig,
    Template,
    apply_calibration,
    atlas_measure,
    build_pyramid,
    fit_calibration,
    ncc,
    register,
    warp_mask,
)
from .regressor import (
    AdamState,
    CVPlan,
    TrainConfig,
    adam_step,
    augment_translate,
    lr_schedule,
    make_cv_plan,
    predict,
    train,
)
from .autodiff import NetworkConfig, build_network, forward, mse_loss
from .stats import (
    MetricsReport,
    PairedMeasurements,
    bland_altman_data,
    compute_report,
    loa,
    mae,
    pearson_r,
    r2,
    roc_auc,
    screen_at_threshold,
    top_outliers,
)

__version__ = "0.1.0"
