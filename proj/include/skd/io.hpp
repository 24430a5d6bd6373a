#pragma once

#include <bit>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "skd/detector.hpp"
#include "skd/errors.hpp"
#include "skd/geometry.hpp"

namespace skd {

// ---------------------------------------------------------------------------
// number formatting: shortest representation that parses back bit-exactly
// ---------------------------------------------------------------------------

inline std::string format_double(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
    if (ec != std::errc()) throw IOFailure("format_double failed");
    return std::string(buf, ptr);
}

inline double parse_double(const std::string& token) {
    if (token.empty()) throw MalformedRecord("empty numeric token");
    const char* begin = token.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end != begin + token.size()) throw MalformedRecord("bad numeric token '" + token + "'");
    return value;
}

// ---------------------------------------------------------------------------
// binary scans: little-endian float32 records (x, y, z, intensity)
// ---------------------------------------------------------------------------

namespace detail {

inline float decode_le_float(const unsigned char* bytes) {
    const std::uint32_t u = static_cast<std::uint32_t>(bytes[0]) |
                            (static_cast<std::uint32_t>(bytes[1]) << 8) |
                            (static_cast<std::uint32_t>(bytes[2]) << 16) |
                            (static_cast<std::uint32_t>(bytes[3]) << 24);
    return std::bit_cast<float>(u);
}

inline void encode_le_float(float value, unsigned char* bytes) {
    const std::uint32_t u = std::bit_cast<std::uint32_t>(value);
    bytes[0] = static_cast<unsigned char>(u & 0xff);
    bytes[1] = static_cast<unsigned char>((u >> 8) & 0xff);
    bytes[2] = static_cast<unsigned char>((u >> 16) & 0xff);
    bytes[3] = static_cast<unsigned char>((u >> 24) & 0xff);
}

}  // namespace detail

inline PointCloud load_lidar_bin_bytes(const std::vector<unsigned char>& bytes) {
    if (bytes.empty()) throw MalformedFile("binary scan is empty");
    if (bytes.size() % 16 != 0)
        throw MalformedFile("binary scan size " + std::to_string(bytes.size()) + " is not a multiple of 16");
    PointCloud cloud;
    cloud.points.reserve(bytes.size() / 16);
    for (std::size_t off = 0; off < bytes.size(); off += 16) {
        const float x = detail::decode_le_float(bytes.data() + off);
        const float y = detail::decode_le_float(bytes.data() + off + 4);
        const float z = detail::decode_le_float(bytes.data() + off + 8);
        // the intensity channel is parsed and discarded
        Point3 p{static_cast<double>(x), static_cast<double>(y), static_cast<double>(z)};
        if (!p.is_finite()) throw MalformedFile("binary scan contains non-finite coordinates");
        cloud.points.push_back(p);
    }
    return cloud;
}

inline PointCloud load_lidar_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IOFailure("cannot open '" + path + "'");
    std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
    if (in.bad()) throw IOFailure("read error on '" + path + "'");
    return load_lidar_bin_bytes(bytes);
}

inline void save_lidar_bin(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IOFailure("cannot open '" + path + "' for writing");
    unsigned char record[16];
    for (const Point3& p : cloud.points) {
        detail::encode_le_float(static_cast<float>(p.x), record);
        detail::encode_le_float(static_cast<float>(p.y), record + 4);
        detail::encode_le_float(static_cast<float>(p.z), record + 8);
        detail::encode_le_float(0.0f, record + 12);
        out.write(reinterpret_cast<const char*>(record), 16);
    }
    if (!out) throw IOFailure("write error on '" + path + "'");
}

// ---------------------------------------------------------------------------
// ASCII PLY
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) out.push_back(tok);
    return out;
}

}  // namespace detail

inline PointCloud load_ply_ascii_stream(std::istream& in) {
    std::string line;
    auto next_line = [&](std::string& dst) {
        if (!std::getline(in, dst)) return false;
        if (!dst.empty() && dst.back() == '\r') dst.pop_back();
        return true;
    };

    if (!next_line(line) || line != "ply") throw MalformedHeader("missing 'ply' magic");
    if (!next_line(line) || detail::split_ws(line) != std::vector<std::string>{"format", "ascii", "1.0"})
        throw MalformedHeader("only 'format ascii 1.0' is supported");

    long long vertex_count = -1;
    std::vector<std::string> properties;
    bool in_vertex_element = false;
    while (true) {
        if (!next_line(line)) throw MalformedHeader("missing end_header");
        const auto toks = detail::split_ws(line);
        if (toks.empty()) continue;
        if (toks[0] == "comment" || toks[0] == "obj_info") continue;
        if (toks[0] == "end_header") break;
        if (toks[0] == "element") {
            if (toks.size() != 3) throw MalformedHeader("bad element line '" + line + "'");
            if (toks[1] == "vertex") {
                if (vertex_count >= 0) throw MalformedHeader("duplicate vertex element");
                try {
                    vertex_count = std::stoll(toks[2]);
                } catch (const std::exception&) {
                    throw MalformedHeader("bad vertex count '" + toks[2] + "'");
                }
                in_vertex_element = true;
            } else {
                if (vertex_count < 0)
                    throw MalformedHeader("vertex element must come first");
                in_vertex_element = false;  // trailing elements are ignored
            }
            continue;
        }
        if (toks[0] == "property") {
            if (!in_vertex_element) continue;
            if (toks.size() != 3) throw MalformedHeader("bad property line '" + line + "'");
            if (toks[1] != "float" && toks[1] != "double" && toks[1] != "float32" && toks[1] != "float64")
                throw MalformedHeader("unsupported vertex property type '" + toks[1] + "'");
            properties.push_back(toks[2]);
            continue;
        }
        throw MalformedHeader("unexpected header line '" + line + "'");
    }

    if (vertex_count < 1) throw MalformedHeader("vertex count must be at least 1");
    int col_x = -1, col_y = -1, col_z = -1;
    for (std::size_t i = 0; i < properties.size(); ++i) {
        if (properties[i] == "x") col_x = static_cast<int>(i);
        if (properties[i] == "y") col_y = static_cast<int>(i);
        if (properties[i] == "z") col_z = static_cast<int>(i);
    }
    if (col_x < 0 || col_y < 0 || col_z < 0) throw MalformedHeader("vertex element lacks x, y, z properties");

    PointCloud cloud;
    cloud.points.reserve(static_cast<std::size_t>(vertex_count));
    for (long long i = 0; i < vertex_count; ++i) {
        if (!next_line(line)) throw MalformedRecord("unexpected end of file in vertex records");
        const auto toks = detail::split_ws(line);
        if (toks.size() != properties.size())
            throw MalformedRecord("vertex record has " + std::to_string(toks.size()) + " fields, expected " +
                                  std::to_string(properties.size()));
        Point3 p{parse_double(toks[static_cast<std::size_t>(col_x)]),
                 parse_double(toks[static_cast<std::size_t>(col_y)]),
                 parse_double(toks[static_cast<std::size_t>(col_z)])};
        if (!p.is_finite()) throw MalformedRecord("vertex record has non-finite coordinates");
        cloud.points.push_back(p);
    }
    return cloud;
}

inline PointCloud load_ply_ascii(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOFailure("cannot open '" + path + "'");
    return load_ply_ascii_stream(in);
}

inline void save_ply_ascii(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw IOFailure("cannot open '" + path + "' for writing");
    out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
        << "\nproperty double x\nproperty double y\nproperty double z\nend_header\n";
    for (const Point3& p : cloud.points)
        out << format_double(p.x) << ' ' << format_double(p.y) << ' ' << format_double(p.z) << '\n';
    if (!out) throw IOFailure("write error on '" + path + "'");
}

inline PointCloud load_cloud(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".ply") == 0) return load_ply_ascii(path);
    return load_lidar_bin(path);
}

// ---------------------------------------------------------------------------
// rigid transform files: 12 numbers, rotation rows then translation
// ---------------------------------------------------------------------------

inline void save_transform(const std::string& path, const RigidTransform& t) {
    std::ofstream out(path);
    if (!out) throw IOFailure("cannot open '" + path + "' for writing");
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) out << format_double(t.rotation(r, c)) << (c == 2 ? '\n' : ' ');
    for (int r = 0; r < 3; ++r) out << format_double(t.translation(r)) << (r == 2 ? '\n' : ' ');
    if (!out) throw IOFailure("write error on '" + path + "'");
}

inline RigidTransform load_transform(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOFailure("cannot open '" + path + "'");
    std::vector<double> values;
    std::string tok;
    while (in >> tok) values.push_back(parse_double(tok));
    if (values.size() != 12) throw MalformedFile("transform file must hold exactly 12 numbers");
    RigidTransform t;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) t.rotation(r, c) = values[static_cast<std::size_t>(3 * r + c)];
    for (int r = 0; r < 3; ++r) t.translation(r) = values[static_cast<std::size_t>(9 + r)];
    if (!t.is_rigid(1e-6)) throw MalformedFile("transform in '" + path + "' is not rigid");
    return t;
}

// ---------------------------------------------------------------------------
// checkpoint container: named row-major tensors, hexfloat text, versioned
// ---------------------------------------------------------------------------

struct Checkpoint {
    std::vector<std::pair<std::string, Eigen::MatrixXd>> tensors;

    void add(const std::string& name, const Eigen::MatrixXd& tensor) { tensors.emplace_back(name, tensor); }
    void add(const std::string& name, const Eigen::VectorXd& vec) {
        tensors.emplace_back(name, Eigen::MatrixXd(vec.transpose()));
    }
    void add_scalar(const std::string& name, double value) {
        Eigen::MatrixXd m(1, 1);
        m(0, 0) = value;
        tensors.emplace_back(name, m);
    }

    const Eigen::MatrixXd& get(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw CheckpointError("missing tensor '" + name + "'");
    }
    Eigen::VectorXd get_vector(const std::string& name) const { return get(name).row(0).transpose(); }
    double get_scalar(const std::string& name) const {
        const Eigen::MatrixXd& m = get(name);
        if (m.rows() != 1 || m.cols() != 1) throw CheckpointError("tensor '" + name + "' is not a scalar");
        return m(0, 0);
    }
};

inline std::string checkpoint_to_string(const Checkpoint& ckpt) {
    std::ostringstream out;
    out << "skd-checkpoint 1\n";
    char buf[64];
    for (const auto& [name, tensor] : ckpt.tensors) {
        out << "tensor " << name << ' ' << tensor.rows() << ' ' << tensor.cols() << '\n';
        for (Eigen::Index r = 0; r < tensor.rows(); ++r) {
            for (Eigen::Index c = 0; c < tensor.cols(); ++c) {
                // hexfloat: exact round-trip regardless of decimal printing
                std::snprintf(buf, sizeof(buf), "%a", tensor(r, c));
                out << buf << (c + 1 == tensor.cols() ? '\n' : ' ');
            }
        }
    }
    out << "end\n";
    return out.str();
}

inline Checkpoint checkpoint_from_string(const std::string& text) {
    std::istringstream in(text);
    std::string word;
    int version = -1;
    if (!(in >> word) || word != "skd-checkpoint" || !(in >> version))
        throw CheckpointError("bad checkpoint magic");
    if (version != 1) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
    Checkpoint ckpt;
    while (true) {
        if (!(in >> word)) throw CheckpointError("truncated checkpoint (missing 'end')");
        if (word == "end") break;
        if (word != "tensor") throw CheckpointError("unexpected token '" + word + "'");
        std::string name;
        Eigen::Index rows = 0, cols = 0;
        if (!(in >> name >> rows >> cols) || rows < 0 || cols < 0)
            throw CheckpointError("bad tensor header for '" + name + "'");
        Eigen::MatrixXd tensor(rows, cols);
        for (Eigen::Index r = 0; r < rows; ++r) {
            for (Eigen::Index c = 0; c < cols; ++c) {
                std::string tok;
                if (!(in >> tok)) throw CheckpointError("truncated tensor '" + name + "'");
                char* end = nullptr;
                tensor(r, c) = std::strtod(tok.c_str(), &end);
                if (end != tok.c_str() + tok.size())
                    throw CheckpointError("bad value '" + tok + "' in tensor '" + name + "'");
            }
        }
        ckpt.add(name, tensor);
    }
    return ckpt;
}

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path);
    if (!out) throw IOFailure("cannot open '" + path + "' for writing");
    out << checkpoint_to_string(ckpt);
    if (!out) throw IOFailure("write error on '" + path + "'");
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOFailure("cannot open checkpoint '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return checkpoint_from_string(buffer.str());
}

inline Checkpoint to_checkpoint(const SkdDetector& det) {
    Checkpoint c;
    c.add_scalar("meta.descriptor_k", det.descriptor.k);
    c.add_scalar("meta.encoder_k", det.encoder.k);
    c.add_scalar("meta.saliency_layer", det.saliency_layer);
    c.add_scalar("meta.pca_explained", det.pca.explained_fraction);
    c.add("descriptor.w1", det.descriptor.w1);
    c.add("descriptor.b1", det.descriptor.b1);
    c.add("descriptor.w2", det.descriptor.w2);
    c.add("descriptor.b2", det.descriptor.b2);
    c.add("descriptor.w3", det.descriptor.w3);
    c.add("descriptor.b3", det.descriptor.b3);
    c.add("descriptor.w4", det.descriptor.w4);
    c.add("descriptor.b4", det.descriptor.b4);
    c.add("pca.mean", det.pca.mean);
    c.add("pca.basis", det.pca.basis);
    c.add("pca.eigenvalues", det.pca.eigenvalues);
    c.add("encoder.w1", det.encoder.w1);
    c.add("encoder.b1", det.encoder.b1);
    c.add("encoder.w2", det.encoder.w2);
    c.add("encoder.b2", det.encoder.b2);
    c.add("head.w1", det.head.w1);
    c.add("head.b1", det.head.b1);
    c.add("head.w2", det.head.w2);
    c.add("head.b2", det.head.b2);
    return c;
}

inline SkdDetector detector_from_checkpoint(const Checkpoint& c) {
    SkdDetector det;
    det.descriptor.k = static_cast<int>(c.get_scalar("meta.descriptor_k"));
    det.encoder.k = static_cast<int>(c.get_scalar("meta.encoder_k"));
    det.saliency_layer = static_cast<int>(c.get_scalar("meta.saliency_layer"));
    det.descriptor.w1 = c.get("descriptor.w1");
    det.descriptor.b1 = c.get_vector("descriptor.b1");
    det.descriptor.w2 = c.get("descriptor.w2");
    det.descriptor.b2 = c.get_vector("descriptor.b2");
    det.descriptor.w3 = c.get("descriptor.w3");
    det.descriptor.b3 = c.get_vector("descriptor.b3");
    det.descriptor.w4 = c.get("descriptor.w4");
    det.descriptor.b4 = c.get_vector("descriptor.b4");
    det.pca.mean = c.get_vector("pca.mean");
    det.pca.basis = c.get("pca.basis");
    det.pca.eigenvalues = c.get_vector("pca.eigenvalues");
    det.pca.explained_fraction = c.get_scalar("meta.pca_explained");
    det.encoder.w1 = c.get("encoder.w1");
    det.encoder.b1 = c.get_vector("encoder.b1");
    det.encoder.w2 = c.get("encoder.w2");
    det.encoder.b2 = c.get_vector("encoder.b2");
    det.head.w1 = c.get("head.w1");
    det.head.b1 = c.get_vector("head.b1");
    det.head.w2 = c.get("head.w2");
    det.head.b2 = c.get_vector("head.b2");
    return det;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline std::string csv_to_string(const CsvTable& table) {
    std::ostringstream out;
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out << row[i] << (i + 1 == row.size() ? '\n' : ',');
    };
    write_row(table.header);
    for (const auto& row : table.rows) {
        if (row.size() != table.header.size()) throw MalformedFile("csv row width does not match header");
        write_row(row);
    }
    return out.str();
}

inline void write_csv(const std::string& path, const CsvTable& table) {
    std::ofstream out(path);
    if (!out) throw IOFailure("cannot open '" + path + "' for writing");
    out << csv_to_string(table);
    if (!out) throw IOFailure("write error on '" + path + "'");
}

inline CsvTable csv_from_string(const std::string& text) {
    std::istringstream in(text);
    CsvTable table;
    std::string line;
    auto split = [](const std::string& s) {
        std::vector<std::string> cells;
        std::string cell;
        for (char ch : s) {
            if (ch == ',') {
                cells.push_back(cell);
                cell.clear();
            } else {
                cell.push_back(ch);
            }
        }
        cells.push_back(cell);
        return cells;
    };
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (first) {
            table.header = split(line);
            first = false;
        } else {
            auto cells = split(line);
            if (cells.size() != table.header.size())
                throw MalformedFile("csv row width does not match header");
            table.rows.push_back(std::move(cells));
        }
    }
    if (first) throw MalformedFile("csv file is empty");
    return table;
}

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IOFailure("cannot open '" + path + "'");
    std::stringstream buffer;
    buffer << in.rdbuf();
    return csv_from_string(buffer.str());
}

}  // namespace skd
