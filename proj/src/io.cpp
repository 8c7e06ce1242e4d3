#include "lesioncad/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "lesioncad/errors.hpp"
#include "lesioncad/parallel.hpp"
#include "lesioncad/rng.hpp"

namespace lesioncad::io {

using nlohmann::json;

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
    }
    return v;
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw IngestError(path.string() + ": " + e.what());
    }
}

}  // namespace

std::string read_text_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IngestError("cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << content;
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

void write_raw_volume(const Volume& vol, const fs::path& path) {
    std::vector<std::uint32_t> words(vol.voxels.size());
    for (std::size_t i = 0; i < words.size(); ++i) {
        words[i] = to_little_endian(std::bit_cast<std::uint32_t>(vol.voxels[i]));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(words.data()), static_cast<std::streamsize>(words.size() * 4));
    if (!out) throw std::runtime_error("write failed for " + path.string());
}

Volume read_raw_volume(const fs::path& path, Dims dims, Spacing spacing) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw IngestError("cannot read " + path.string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    if (bytes != dims.voxel_count() * 4) {
        throw IngestError(path.string() + ": expected " + std::to_string(dims.voxel_count() * 4) + " bytes, found " +
                          std::to_string(bytes));
    }
    in.seekg(0);
    std::vector<std::uint32_t> words(dims.voxel_count());
    in.read(reinterpret_cast<char*>(words.data()), static_cast<std::streamsize>(bytes));
    Volume vol(dims, spacing);
    for (std::size_t i = 0; i < words.size(); ++i) vol.voxels[i] = std::bit_cast<float>(to_little_endian(words[i]));
    return vol;
}

void write_study(const Study& study, const fs::path& dir) {
    fs::create_directories(dir);
    const Dims d = study.dims();
    const Spacing s = study.spacing();
    json manifest;
    manifest["id"] = study.id;
    manifest["dims"] = {d.nx, d.ny, d.nz};
    manifest["spacing"] = {s.sx, s.sy, s.sz};
    manifest["class"] = std::string(to_string(study.truth_class));
    manifest["format"] = "float32-le, x fastest";
    json seqs = json::object();
    for (auto k : kAllSequences) {
        const std::string name = std::string(to_string(k)) + ".raw";
        seqs[std::string(to_string(k))] = name;
        write_raw_volume(study.volume(k), dir / name);
    }
    manifest["sequences"] = seqs;
    write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");

    json boxes = json::array();
    for (const auto& t : study.truth_boxes) {
        boxes.push_back({{"z", t.z}, {"x0", t.box.x0}, {"y0", t.box.y0}, {"x1", t.box.x1}, {"y1", t.box.y1}});
    }
    write_text_file(dir / "truth.json", json{{"boxes", boxes}}.dump(2) + "\n");
}

Study read_study(const fs::path& dir) {
    const json manifest = read_json(dir / "manifest.json");
    const json truth = read_json(dir / "truth.json");
    Study study;
    try {
        study.id = manifest.at("id").get<std::string>();
        const auto& dims = manifest.at("dims");
        const auto& sp = manifest.at("spacing");
        const Dims d{dims.at(0).get<int>(), dims.at(1).get<int>(), dims.at(2).get<int>()};
        const Spacing s{sp.at(0).get<double>(), sp.at(1).get<double>(), sp.at(2).get<double>()};
        if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0) throw IngestError(dir.string() + ": non-positive dims");
        const auto cls = parse_lesion_class(manifest.at("class").get<std::string>());
        if (!cls) throw IngestError(dir.string() + ": unknown class");
        study.truth_class = *cls;
        for (const auto& [name, file] : manifest.at("sequences").items()) {
            const auto seq = parse_sequence(name);
            if (!seq) throw IngestError(dir.string() + ": unknown sequence " + name);
            study.volumes[index_of(*seq)] = read_raw_volume(dir / file.get<std::string>(), d, s);
        }
        for (const auto& b : truth.at("boxes")) {
            study.truth_boxes.push_back(
                {b.at("z").get<int>(),
                 {b.at("x0").get<int>(), b.at("y0").get<int>(), b.at("x1").get<int>(), b.at("y1").get<int>()}});
        }
    } catch (const json::exception& e) {
        throw IngestError(dir.string() + ": " + e.what());
    }
    return study;
}

void write_cohort(std::span<const Study> cohort, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    for (const auto& s : cohort) write_study(s, out_dir / s.id);
}

std::vector<Study> read_cohort(const fs::path& data_dir, int threads) {
    if (!fs::is_directory(data_dir)) throw IngestError("data directory not found: " + data_dir.string());
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        if (entry.is_directory() && fs::exists(entry.path() / "manifest.json")) dirs.push_back(entry.path());
    }
    std::sort(dirs.begin(), dirs.end());
    std::vector<Study> cohort(dirs.size());
    parallel_for(dirs.size(), threads, [&](std::size_t i) { cohort[i] = read_study(dirs[i]); });
    std::sort(cohort.begin(), cohort.end(), [](const Study& a, const Study& b) { return a.id < b.id; });
    for (std::size_t i = 0; i < cohort.size(); ++i) {
        if (i > 0 && cohort[i].id == cohort[i - 1].id) throw IngestError("duplicate study id " + cohort[i].id);
        const auto problems = validate_study(cohort[i]);
        if (!problems.empty()) throw IngestError("study " + cohort[i].id + ": " + problems.front());
    }
    return cohort;
}

std::vector<std::pair<std::string, LesionClass>> read_cohort_labels(const fs::path& data_dir) {
    if (!fs::is_directory(data_dir)) throw IngestError("data directory not found: " + data_dir.string());
    std::vector<std::pair<std::string, LesionClass>> out;
    for (const auto& entry : fs::directory_iterator(data_dir)) {
        const auto path = entry.path() / "manifest.json";
        if (!entry.is_directory() || !fs::exists(path)) continue;
        const json m = read_json(path);
        try {
            const auto cls = parse_lesion_class(m.at("class").get<std::string>());
            if (!cls) throw IngestError(path.string() + ": unknown class");
            out.emplace_back(m.at("id").get<std::string>(), *cls);
        } catch (const json::exception& e) {
            throw IngestError(path.string() + ": " + e.what());
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

std::uint64_t cohort_fingerprint(std::span<const Study> cohort) {
    std::uint64_t h = fnv1a64("lesioncad-cohort");
    for (const auto& s : cohort) {
        h = fnv1a64(s.id, h);
        h = fnv1a64(to_string(s.truth_class), h);
        for (const auto& t : s.truth_boxes) {
            const int v[5] = {t.z, t.box.x0, t.box.y0, t.box.x1, t.box.y1};
            h = fnv1a64({reinterpret_cast<const char*>(v), sizeof v}, h);
        }
        for (auto k : kAllSequences) {
            const auto& vol = s.volume(k);
            h = fnv1a64({reinterpret_cast<const char*>(vol.voxels.data()), vol.voxels.size() * sizeof(float)}, h);
        }
    }
    return h;
}

}  // namespace lesioncad::io
