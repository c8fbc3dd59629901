#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cfrl/gvf.hpp"

// Offline transition dataset file: magic "CFRLDS1\0", little-endian header
// (version u32, image_w u16, image_h u16, n_joints u16, record_count u64),
// then fixed-size records of float32 fields:
//   image[w*h], joint_pos[n], joint_torque[n], a_prev[n], a[n], cumulant[6],
//   continuation, terminal u8, pose_gt[7] (quat wxyz + translation of the
//   next-step relative pose), image_next[w*h], joint_pos_next[n],
//   joint_torque_next[n].
namespace cfrl::data {

struct DatasetHeader {
    uint32_t version = 1;
    uint16_t image_w = 0;
    uint16_t image_h = 0;
    uint16_t n_joints = 0;
    uint64_t record_count = 0;
};

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<gvf::Transition>& records);

std::vector<gvf::Transition> read_dataset(const std::string& path,
                                          DatasetHeader* out_header = nullptr);

} // namespace cfrl::data
