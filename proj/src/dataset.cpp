#include "eqr/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "eqr/config.hpp"
#include "eqr/error.hpp"
#include "eqr/io.hpp"

namespace eqr {

namespace {

std::optional<std::size_t> parse_range(const std::string& tag) {
    if (tag == "f64") return std::nullopt;
    if (tag == "binary") return 0;
    if (tag == "u8") return 7;
    if (tag.size() > 1 && tag[0] == 'q') {
        std::size_t q = 0;
        auto [ptr, ec] = std::from_chars(tag.data() + 1, tag.data() + tag.size(), q);
        if (ec == std::errc() && ptr == tag.data() + tag.size() && q <= 52) return q;
    }
    throw InputError("unknown range tag '" + tag + "' (expected binary, u8, q<Q> or f64)");
}

}  // namespace

std::optional<std::size_t> DatasetManifest::bits_q() const { return parse_range(range); }

DatasetManifest DatasetManifest::parse(std::string_view text) {
    DatasetManifest m;
    bool have_shape = false;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto eol = text.find('\n');
        std::string line(text.substr(0, eol));
        text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const std::string where = "manifest line " + std::to_string(line_no) + ": ";
        if (line[0] == '#') {
            const auto eq = line.find('=');
            if (eq == std::string::npos) continue;  // plain comment
            const auto key = line.substr(1, eq - 1);
            const auto value = line.substr(eq + 1);
            if (key == "version") {
                if (value != "1") throw InputError(where + "unsupported manifest version '" + value + "'");
                m.version = value;
            } else if (key == "shape") {
                m.shape = Shape::parse(value);
                have_shape = true;
            } else if (key == "channels") {
                const auto kv = KeyValues::parse("channels=" + value);
                m.channels = kv.get_uint("channels", 1);
                if (m.channels == 0) throw InputError(where + "channel count must be positive");
            } else if (key == "range") {
                parse_range(value);
                m.range = value;
            } else if (key == "certificate") {
                m.certificate = value;
            } else {
                throw InputError(where + "unknown header '" + key + "'");
            }
            continue;
        }
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) throw InputError(where + "expected 'path<TAB>label'");
        m.entries.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    if (!have_shape) throw InputError("manifest is missing the #shape= header");
    return m;
}

std::string DatasetManifest::to_text() const {
    std::ostringstream out;
    out << "#version=" << version << "\n#shape=" << shape.to_string() << "\n#channels=" << channels
        << "\n#range=" << range << "\n";
    if (certificate) out << "#certificate=" << *certificate << "\n";
    for (const auto& e : entries) out << e.path << '\t' << e.label << '\n';
    return out.str();
}

std::vector<ChannelTensor> Dataset::tensors() const {
    std::vector<ChannelTensor> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(item.tensor);
    return out;
}

Dataset load_manifest(const std::filesystem::path& path) {
    Dataset ds;
    ds.manifest = DatasetManifest::parse(read_text_file(path.string()));
    const auto& m = ds.manifest;
    const auto q = m.bits_q();
    const double limit = q ? std::ldexp(1.0, static_cast<int>(*q) + 1) : 0.0;
    const auto base = path.parent_path();

    std::vector<std::string> problems;
    bool only_range = true;
    for (const auto& entry : m.entries) {
        const auto file = base / entry.path;
        try {
            ChannelTensor x = file.extension() == ".pgm" ? ChannelTensor(load_pgm(file)) : load_tensor(file);
            if (x.shape() != m.shape || x.channels() != m.channels) {
                only_range = false;
                problems.push_back(entry.path + ": shape " + x.shape().to_string() + " with " +
                                   std::to_string(x.channels()) + " channel(s), manifest declares " +
                                   m.shape.to_string() + " with " + std::to_string(m.channels));
                continue;
            }
            if (q) {
                for (std::size_t i = 0; i < x.values().size(); ++i) {
                    const double v = x.values()[i];
                    if (!(v >= 0.0 && v < limit && v == std::floor(v))) {
                        std::ostringstream msg;
                        msg << entry.path << ": value " << v << " at flat index " << i << " violates range "
                            << m.range;
                        problems.push_back(msg.str());
                        break;
                    }
                }
            }
            ds.items.push_back({std::move(x), entry.label});
        } catch (const Error& e) {
            only_range = false;
            problems.push_back(entry.path + ": " + e.what());
        }
    }
    if (!problems.empty()) {
        std::string msg = "dataset '" + path.string() + "' has " + std::to_string(problems.size()) + " problem(s):";
        for (const auto& p : problems) msg += "\n  " + p;
        if (only_range) throw RangeError(msg);
        throw InputError(msg);
    }
    return ds;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    const auto text = manifest.to_text();
    write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

}  // namespace eqr
