#ifndef VF_VOLUME_IO_HPP
#define VF_VOLUME_IO_HPP

#include <string>

#include "vf/volume.hpp"

namespace vf {

// VOL1 container, little-endian throughout:
//   magic "VOL1" (4 bytes)
//   dtype u8: 1 = IEEE-754 32-bit scalar, 2 = u8 label
//   reserved 3 bytes, zero
//   nx, ny, nz as u32
//   payload: nx*ny*nz values, x-fastest order
//
// Scalars live as 64-bit doubles in memory but are stored as 32-bit floats,
// so writing rounds values that are not exactly float-representable.
// Reading a file and writing it back is always byte-identical. Label masks
// (dtype 2) restrict payload values to {0,1,2}.

Volume read_vol(const std::string& path);
void write_vol(const std::string& path, const Volume& v);

LabelMask read_mask(const std::string& path);
void write_mask(const std::string& path, const LabelMask& m);

// Peeks at the dtype byte, throws FormatError on bad magic.
int vol_file_dtype(const std::string& path);

}  // namespace vf

#endif  // VF_VOLUME_IO_HPP
