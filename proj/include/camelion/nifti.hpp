#pragma once

#include <filesystem>
#include <variant>

#include "camelion/volume.hpp"

namespace camelion {

enum class NiftiTarget {
  Auto,    ///< unscaled uint8 data becomes a LabelVolume, everything else scalar
  Scalar,  ///< always a ScalarVolume
  Label,   ///< always a LabelVolume (values must fit 0..255 after scaling)
};

/// Reads the uncompressed NIfTI-1 subset: single file ("n+1") or hdr/img pair
/// ("ni1"), datatypes uint8, int16 and float32, either byte order.
/// dim[1..3] and pixdim[1..3] become the header; scl_slope/scl_inter are
/// applied when slope != 0. Orientation fields are ignored.
std::variant<ScalarVolume, LabelVolume> import_nifti(const std::filesystem::path& path,
                                                     NiftiTarget target = NiftiTarget::Auto);

}  // namespace camelion
