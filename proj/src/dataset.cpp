#include "cfrl/dataset.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace cfrl::data {

namespace {

constexpr char kMagic[8] = {'C', 'F', 'R', 'L', 'D', 'S', '1', '\0'};

static_assert(sizeof(float) == 4);

template <typename T>
void write_le(std::ostream& os, T v) {
    unsigned char b[sizeof(T)];
    for (size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    is.read(reinterpret_cast<char*>(b), sizeof(T));
    T v = 0;
    for (size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
    return v;
}

void write_f32(std::ostream& os, const float* data, size_t n) {
    // float bit patterns are already little-endian on every supported target
    os.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n * 4));
}

void read_f32(std::istream& is, float* data, size_t n) {
    is.read(reinterpret_cast<char*>(data), static_cast<std::streamsize>(n * 4));
}

} // namespace

void write_dataset(const std::string& path, const DatasetHeader& header,
                   const std::vector<gvf::Transition>& records) {
    if (header.record_count != records.size())
        throw std::invalid_argument("write_dataset: header count != records");
    const size_t wh = static_cast<size_t>(header.image_w) * header.image_h;
    const size_t n = header.n_joints;

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("write_dataset: cannot open " + path);
    os.write(kMagic, 8);
    write_le<uint32_t>(os, header.version);
    write_le<uint16_t>(os, header.image_w);
    write_le<uint16_t>(os, header.image_h);
    write_le<uint16_t>(os, header.n_joints);
    write_le<uint64_t>(os, header.record_count);

    for (const auto& r : records) {
        if (static_cast<size_t>(r.obs.image.size()) != wh ||
            static_cast<size_t>(r.obs.joint_pos.size()) != n)
            throw std::invalid_argument("write_dataset: record dims do not match header");
        write_f32(os, r.obs.image.data(), wh);
        write_f32(os, r.obs.joint_pos.data(), n);
        write_f32(os, r.obs.joint_torque.data(), n);
        write_f32(os, r.a_prev.data(), n);
        write_f32(os, r.action.data(), n);
        write_f32(os, r.cumulant_next.data(), 6);
        const float cont = r.continuation_next;
        write_f32(os, &cont, 1);
        const unsigned char term = r.terminal ? 1 : 0;
        os.write(reinterpret_cast<const char*>(&term), 1);
        write_f32(os, r.pose_gt.data(), 7);
        write_f32(os, r.obs_next.image.data(), wh);
        write_f32(os, r.obs_next.joint_pos.data(), n);
        write_f32(os, r.obs_next.joint_torque.data(), n);
    }
    if (!os) throw std::runtime_error("write_dataset: write failed for " + path);
}

std::vector<gvf::Transition> read_dataset(const std::string& path, DatasetHeader* out_header) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("read_dataset: cannot open " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("read_dataset: bad magic in " + path);

    DatasetHeader h;
    h.version = read_le<uint32_t>(is);
    h.image_w = read_le<uint16_t>(is);
    h.image_h = read_le<uint16_t>(is);
    h.n_joints = read_le<uint16_t>(is);
    h.record_count = read_le<uint64_t>(is);
    if (h.version != 1) throw std::runtime_error("read_dataset: unsupported version");
    const size_t wh = static_cast<size_t>(h.image_w) * h.image_h;
    const size_t n = h.n_joints;

    std::vector<gvf::Transition> records(h.record_count);
    for (auto& r : records) {
        r.obs.image.resize(wh);
        r.obs.joint_pos.resize(n);
        r.obs.joint_torque.resize(n);
        r.a_prev.resize(n);
        r.action.resize(n);
        r.obs_next.image.resize(wh);
        r.obs_next.joint_pos.resize(n);
        r.obs_next.joint_torque.resize(n);
        read_f32(is, r.obs.image.data(), wh);
        read_f32(is, r.obs.joint_pos.data(), n);
        read_f32(is, r.obs.joint_torque.data(), n);
        read_f32(is, r.a_prev.data(), n);
        read_f32(is, r.action.data(), n);
        read_f32(is, r.cumulant_next.data(), 6);
        float cont = 0.0f;
        read_f32(is, &cont, 1);
        r.continuation_next = cont;
        unsigned char term = 0;
        is.read(reinterpret_cast<char*>(&term), 1);
        r.terminal = term != 0;
        read_f32(is, r.pose_gt.data(), 7);
        read_f32(is, r.obs_next.image.data(), wh);
        read_f32(is, r.obs_next.joint_pos.data(), n);
        read_f32(is, r.obs_next.joint_torque.data(), n);
    }
    if (!is) throw std::runtime_error("read_dataset: truncated file " + path);
    if (out_header) *out_header = h;
    return records;
}

} // namespace cfrl::data
