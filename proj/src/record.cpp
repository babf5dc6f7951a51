#include "mast/record.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>

#include "mast/errors.hpp"

namespace mast {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

namespace {

std::string cell(const std::optional<double>& v) {
  return v.has_value() ? format_double(*v) : std::string();
}

std::string cell(const std::optional<long>& v) {
  return v.has_value() ? std::to_string(*v) : std::string();
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open output file: " + path);
  return out;
}

void write_header(std::ofstream& out, const CsvHeader& header) {
  for (const auto& [key, value] : header) {
    out << "# " << key << "=" << value << "\n";
  }
}

}  // namespace

void write_runs_csv(const std::string& path, const CsvHeader& header,
                    const std::vector<RunRow>& rows) {
  auto out = open_out(path);
  write_header(out, header);
  out << "seed,t,erm_loss,grad_sq_erm,mast_loss,mast_loss_stderr,grad_sq_mast,"
         "val_acc,test_acc,comm_uplink_nnz,comm_downlink_nnz,comm_cum_nnz,diverged\n";
  for (const auto& r : rows) {
    out << r.seed << ',' << r.t << ',' << format_double(r.erm_loss) << ','
        << format_double(r.grad_sq_erm) << ',' << cell(r.mast_loss) << ','
        << cell(r.mast_loss_stderr) << ',' << cell(r.grad_sq_mast) << ','
        << cell(r.val_acc) << ',' << cell(r.test_acc) << ','
        << cell(r.comm_uplink_nnz) << ',' << cell(r.comm_downlink_nnz) << ','
        << cell(r.comm_cum_nnz) << ',' << (r.diverged ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

std::vector<SummaryRow> summarize(const std::vector<RunRow>& rows) {
  std::map<long, std::vector<const RunRow*>> by_t;
  for (const auto& r : rows) {
    if (r.diverged) continue;
    by_t[r.t].push_back(&r);
  }
  std::vector<SummaryRow> out;
  out.reserve(by_t.size());
  for (const auto& [t, group] : by_t) {
    SummaryRow s;
    s.t = t;
    s.n_seeds = static_cast<int>(group.size());
    const double n = static_cast<double>(group.size());
    for (const RunRow* r : group) {
      s.erm_loss_mean += r->erm_loss;
      s.grad_sq_erm_mean += r->grad_sq_erm;
    }
    s.erm_loss_mean /= n;
    s.grad_sq_erm_mean /= n;
    double var = 0.0;
    for (const RunRow* r : group) {
      var += (r->erm_loss - s.erm_loss_mean) * (r->erm_loss - s.erm_loss_mean);
    }
    s.erm_loss_std = std::sqrt(var / n);

    const bool has_mast =
        std::all_of(group.begin(), group.end(),
                    [](const RunRow* r) { return r->mast_loss.has_value(); });
    if (has_mast) {
      double mean = 0.0;
      for (const RunRow* r : group) mean += *r->mast_loss;
      mean /= n;
      double mvar = 0.0;
      for (const RunRow* r : group) mvar += (*r->mast_loss - mean) * (*r->mast_loss - mean);
      s.mast_loss_mean = mean;
      s.mast_loss_std = std::sqrt(mvar / n);
    }
    const bool has_val = std::all_of(group.begin(), group.end(),
                                     [](const RunRow* r) { return r->val_acc.has_value(); });
    if (has_val) {
      double mean = 0.0;
      for (const RunRow* r : group) mean += *r->val_acc;
      s.val_acc_mean = mean / n;
    }
    const bool has_test = std::all_of(group.begin(), group.end(),
                                      [](const RunRow* r) { return r->test_acc.has_value(); });
    if (has_test) {
      double mean = 0.0;
      for (const RunRow* r : group) mean += *r->test_acc;
      s.test_acc_mean = mean / n;
    }
    out.push_back(s);
  }
  return out;
}

void write_summary_csv(const std::string& path, const CsvHeader& header,
                       const std::vector<SummaryRow>& rows) {
  auto out = open_out(path);
  write_header(out, header);
  out << "t,n_seeds,erm_loss_mean,erm_loss_std,grad_sq_erm_mean,mast_loss_mean,"
         "mast_loss_std,val_acc_mean,test_acc_mean\n";
  for (const auto& r : rows) {
    out << r.t << ',' << r.n_seeds << ',' << format_double(r.erm_loss_mean) << ','
        << format_double(r.erm_loss_std) << ',' << format_double(r.grad_sq_erm_mean) << ','
        << cell(r.mast_loss_mean) << ',' << cell(r.mast_loss_std) << ','
        << cell(r.val_acc_mean) << ',' << cell(r.test_acc_mean) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_svg_mean_band(const std::string& path, const std::string& title,
                         const std::vector<SummaryRow>& rows, bool log_y) {
  const int width = 720, height = 440, margin = 56;
  auto out = open_out(path);
  std::vector<double> xs, mean, lo, hi;
  for (const auto& r : rows) {
    const double m = r.mast_loss_mean.value_or(r.erm_loss_mean);
    const double s = r.mast_loss_mean.has_value() ? r.mast_loss_std.value_or(0.0)
                                                  : r.erm_loss_std;
    double a = m - s, b = m + s, mm = m;
    if (log_y) {
      if (!(mm > 0.0)) continue;
      a = std::log10(std::max(a, mm * 1e-3));
      b = std::log10(b);
      mm = std::log10(mm);
    }
    xs.push_back(static_cast<double>(r.t));
    mean.push_back(mm);
    lo.push_back(a);
    hi.push_back(b);
  }
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"15\">"
      << title << "</text>\n";
  if (xs.size() >= 2) {
    const double x0 = xs.front(), x1 = xs.back();
    double y0 = *std::min_element(lo.begin(), lo.end());
    double y1 = *std::max_element(hi.begin(), hi.end());
    if (y1 <= y0) y1 = y0 + 1.0;
    auto px = [&](double x) {
      return margin + (x - x0) / (x1 - x0) * (width - 2 * margin);
    };
    auto py = [&](double y) {
      return height - margin - (y - y0) / (y1 - y0) * (height - 2 * margin);
    };
    out << "<polygon fill=\"#9ecae1\" fill-opacity=\"0.45\" stroke=\"none\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out << format_double(px(xs[i])) << ',' << format_double(py(hi[i])) << ' ';
    }
    for (std::size_t i = xs.size(); i-- > 0;) {
      out << format_double(px(xs[i])) << ',' << format_double(py(lo[i])) << ' ';
    }
    out << "\"/>\n<polyline fill=\"none\" stroke=\"#08519c\" stroke-width=\"1.6\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) {
      out << format_double(px(xs[i])) << ',' << format_double(py(mean[i])) << ' ';
    }
    out << "\"/>\n";
    out << "<line x1=\"" << margin << "\" y1=\"" << height - margin << "\" x2=\""
        << width - margin << "\" y2=\"" << height - margin
        << "\" stroke=\"black\"/>\n<line x1=\"" << margin << "\" y1=\"" << margin
        << "\" x2=\"" << margin << "\" y2=\"" << height - margin << "\" stroke=\"black\"/>\n";
    out << "<text x=\"" << margin << "\" y=\"" << height - margin + 18
        << "\" font-family=\"sans-serif\" font-size=\"11\">" << format_double(x0)
        << "</text>\n";
    out << "<text x=\"" << width - margin << "\" y=\"" << height - margin + 18
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(x1) << "</text>\n";
    out << "<text x=\"" << margin - 4 << "\" y=\"" << height - margin
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(log_y ? std::pow(10.0, y0) : y0) << "</text>\n";
    out << "<text x=\"" << margin - 4 << "\" y=\"" << margin
        << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">"
        << format_double(log_y ? std::pow(10.0, y1) : y1) << "</text>\n";
  }
  out << "</svg>\n";
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace mast
