#include "fslpn/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <vector>

#include "fslpn/rng.hpp"

namespace fslpn {

namespace {

struct Category {
    const char* name;
    double weight;
    std::array<double, 4> center;
    double spread;
};

// Normal first; attack clusters sit at varied distances so the abnormal class
// is a heterogeneous mixture (2-shot prototypes over raw rows stay noisy while
// a trained extractor can still collapse it).
const std::vector<Category>& unsw_categories() {
    static const std::vector<Category> cats = {
        {"Normal", 0.58, {0.0, 0.0, 0.0, 0.0}, 0.52},
        {"Generic", 0.11, {1.4, 0.5, -0.6, 0.35}, 0.52},
        {"Exploits", 0.10, {2.4, -1.4, 0.8, -0.45}, 0.47},
        {"Fuzzers", 0.08, {-1.85, 1.7, 0.9, 0.55}, 0.47},
        {"DoS", 0.05, {0.45, 2.5, -1.25, -0.9}, 0.47},
        {"Reconnaissance", 0.04, {-1.25, -2.2, 1.4, 1.05}, 0.43},
        {"Shellcode", 0.025, {1.7, 1.85, 1.85, -1.4}, 0.43},
        {"Worms", 0.015, {-2.3, -0.45, -1.95, 1.5}, 0.43},
    };
    return cats;
}

const std::vector<Category>& nsl_categories() {
    static const std::vector<Category> cats = {
        {"normal", 0.56, {0.0, 0.0, 0.0, 0.0}, 0.52},
        {"neptune", 0.16, {2.2, 0.9, -0.8, 0.45}, 0.47},
        {"smurf", 0.10, {1.3, -1.85, 0.6, -0.55}, 0.52},
        {"ipsweep", 0.07, {-1.95, 1.4, 1.25, 0.8}, 0.47},
        {"portsweep", 0.05, {-0.9, -2.3, -1.4, 1.25}, 0.43},
        {"guess_passwd", 0.04, {1.85, 1.95, 1.5, -1.25}, 0.43},
        {"buffer_overflow", 0.02, {-2.4, -0.55, 2.05, -1.5}, 0.43},
    };
    return cats;
}

int pick_category(const std::vector<Category>& cats, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < cats.size(); ++i) {
        acc += cats[i].weight;
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(cats.size()) - 1;
}

// Class-dependent categorical draw: value index from a per-class multinomial.
// The tables shift probability mass with the category index so the column
// carries label information without being a giveaway.
std::string pick_categorical(const std::vector<std::string>& values, int cat_index, Rng& rng) {
    const std::size_t k = values.size();
    std::vector<double> w(k);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const double distance =
            static_cast<double>((i + static_cast<std::size_t>(cat_index)) % k);
        w[i] = 1.0 / (1.0 + 1.3 * distance);
        total += w[i];
    }
    double u = rng.uniform() * total;
    for (std::size_t i = 0; i < k; ++i) {
        u -= w[i];
        if (u < 0.0) return values[i];
    }
    return values[k - 1];
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

struct LatentRow {
    std::array<double, 4> u;
    int cat_index;
};

LatentRow draw_latent(const std::vector<Category>& cats, double attack_spread, Rng& rng) {
    LatentRow row;
    row.cat_index = pick_category(cats, rng);
    const Category& c = cats[static_cast<std::size_t>(row.cat_index)];
    const double scale = row.cat_index == 0 ? 1.0 : attack_spread;
    for (std::size_t d = 0; d < 4; ++d)
        row.u[d] = c.center[d] * scale + rng.gaussian() * c.spread;
    return row;
}

}  // namespace

void write_synthetic_csv(const std::string& path, const SynthConfig& cfg) {
    std::ofstream os(path);
    if (!os) throw_data("cannot write synthetic dataset: " + path);
    Rng rng(Rng::mix(cfg.seed, cfg.schema == Schema::unsw_nb15 ? 0x5A51u : 0x4E53u));

    const std::vector<std::string> protos = {"tcp", "udp", "icmp", "arp"};
    const std::vector<std::string> services = {"http", "dns", "smtp", "ftp", "ssh", "-"};
    const std::vector<std::string> states = {"FIN", "CON", "INT", "REQ"};

    if (cfg.schema == Schema::unsw_nb15) {
        os << "dur,proto,service,state,spkts,dpkts,sbytes,dbytes,rate,sttl,dttl,sload,dload,"
              "sloss,dloss,sinpkt,dinpkt,sjit,djit,swin,stcpb,dtcpb,dwin,tcprtt,synack,ackdat,"
              "smean,dmean,trans_depth,response_body_len,ct_srv_src,ct_state_ttl,ct_dst_ltm,"
              "ct_src_dport_ltm,ct_dst_sport_ltm,ct_dst_src_ltm,is_ftp_login,ct_ftp_cmd,"
              "ct_flw_http_mthd,ct_src_ltm,ct_srv_dst,is_sm_ips_ports,src_entropy,dst_entropy,"
              "flow_iat_mean,flow_iat_std,pkt_len_var,hdr_len,payload_ratio,attack_cat,label\n";
        const auto& cats = unsw_categories();
        for (std::size_t r = 0; r < cfg.rows; ++r) {
            const LatentRow lat = draw_latent(cats, cfg.attack_spread, rng);
            const auto& u = lat.u;
            auto noise = [&](double s) { return rng.gaussian() * s; };

            // informative mixes
            const double sttl = 2.2 + 1.4 * u[0] + noise(0.2);
            const double ct_state_ttl = 1.8 - 1.1 * u[1] + noise(0.2);
            const double rate = 1.2 * u[0] + 0.8 * u[1] + noise(0.2);
            const double sload = 1.5 * u[2] + noise(0.2);
            const double dload = -1.2 * u[2] + 0.6 * u[3] + noise(0.2);
            const double smean = 1.1 * u[3] + 0.5 * u[0] + noise(0.2);
            const double sbytes = u[0] * u[0] + 0.3 * u[1] + noise(0.2);
            const double dbytes = u[1] * u[1] - 0.2 * u[0] + noise(0.2);
            const double sjit = std::fabs(u[2]) + noise(0.2);
            const double tcprtt = u[0] * u[1] + noise(0.2);
            const double dur = 0.8 * std::exp(0.6 * u[2]) + noise(0.2);
            // near-duplicates (correlation pass fodder)
            const double dttl = 0.97 * sttl + noise(0.12);
            const double dmean = 0.95 * smean + noise(0.13);
            const double flow_iat_mean = 0.96 * rate + noise(0.12);

            std::map<std::string, std::string> row;
            row["dur"] = fmt(dur);
            row["proto"] = pick_categorical(protos, lat.cat_index, rng);
            row["service"] = pick_categorical(services, lat.cat_index, rng);
            row["state"] = pick_categorical(states, lat.cat_index, rng);
            row["spkts"] = fmt(noise(1.0));
            row["dpkts"] = fmt(noise(1.0));
            row["sbytes"] = fmt(sbytes);
            row["dbytes"] = fmt(dbytes);
            row["rate"] = fmt(rate);
            row["sttl"] = fmt(sttl);
            row["dttl"] = fmt(dttl);
            row["sload"] = fmt(sload);
            row["dload"] = fmt(dload);
            row["sloss"] = fmt(noise(1.0));
            row["dloss"] = fmt(noise(1.0));
            row["sinpkt"] = fmt(noise(1.0));
            row["dinpkt"] = fmt(noise(1.0));
            row["sjit"] = fmt(sjit);
            row["djit"] = fmt(noise(1.0));
            row["swin"] = fmt(noise(1.0));
            row["stcpb"] = fmt(rng.uniform() * 2.0);
            row["dtcpb"] = fmt(rng.uniform() * 2.0);
            row["dwin"] = fmt(noise(1.0));
            row["tcprtt"] = fmt(tcprtt);
            row["synack"] = fmt(noise(1.0));
            row["ackdat"] = fmt(noise(1.0));
            row["smean"] = fmt(smean);
            row["dmean"] = fmt(dmean);
            row["trans_depth"] = fmt(std::floor(rng.uniform() * 3.0));
            row["response_body_len"] = fmt(noise(1.0));
            row["ct_srv_src"] = fmt(noise(1.0));
            row["ct_state_ttl"] = fmt(ct_state_ttl);
            row["ct_dst_ltm"] = fmt(noise(1.0));
            row["ct_src_dport_ltm"] = fmt(noise(1.0));
            row["ct_dst_sport_ltm"] = fmt(noise(1.0));
            row["ct_dst_src_ltm"] = fmt(noise(1.0));
            row["is_ftp_login"] = "0";  // constant column
            row["ct_ftp_cmd"] = fmt(std::floor(rng.uniform() * 2.0));
            row["ct_flw_http_mthd"] = fmt(noise(1.0));
            row["ct_src_ltm"] = fmt(noise(1.0));
            row["ct_srv_dst"] = fmt(noise(1.0));
            row["is_sm_ips_ports"] = fmt(std::floor(rng.uniform() * 2.0));
            row["src_entropy"] = fmt(noise(1.0));
            row["dst_entropy"] = fmt(noise(1.0));
            row["flow_iat_mean"] = fmt(flow_iat_mean);
            row["flow_iat_std"] = fmt(noise(1.0));
            row["pkt_len_var"] = fmt(noise(1.0));
            row["hdr_len"] = fmt(noise(1.0));
            row["payload_ratio"] = fmt(rng.uniform());

            static const char* order[] = {
                "dur", "proto", "service", "state", "spkts", "dpkts", "sbytes", "dbytes", "rate",
                "sttl", "dttl", "sload", "dload", "sloss", "dloss", "sinpkt", "dinpkt", "sjit",
                "djit", "swin", "stcpb", "dtcpb", "dwin", "tcprtt", "synack", "ackdat", "smean",
                "dmean", "trans_depth", "response_body_len", "ct_srv_src", "ct_state_ttl",
                "ct_dst_ltm", "ct_src_dport_ltm", "ct_dst_sport_ltm", "ct_dst_src_ltm",
                "is_ftp_login", "ct_ftp_cmd", "ct_flw_http_mthd", "ct_src_ltm", "ct_srv_dst",
                "is_sm_ips_ports", "src_entropy", "dst_entropy", "flow_iat_mean", "flow_iat_std",
                "pkt_len_var", "hdr_len", "payload_ratio"};
            for (const char* col : order) os << row[col] << ",";
            const bool normal = lat.cat_index == 0;
            os << cats[static_cast<std::size_t>(lat.cat_index)].name << "," << (normal ? 0 : 1)
               << "\n";
        }
    } else {
        os << "duration,protocol_type,service,flag,src_bytes,dst_bytes,land,wrong_fragment,"
              "urgent,hot,num_failed_logins,logged_in,num_compromised,root_shell,su_attempted,"
              "num_root,num_file_creations,num_shells,num_access_files,num_outbound_cmds,"
              "is_host_login,is_guest_login,count,srv_count,serror_rate,rerror_rate,"
              "same_srv_rate,diff_srv_rate,srv_diff_host_rate,dst_host_count,dst_host_srv_count,"
              "dst_host_same_srv_rate,dst_host_diff_srv_rate,dst_host_same_src_port_rate,"
              "dst_host_srv_diff_host_rate,dst_host_serror_rate,dst_host_rerror_rate,"
              "dst_host_srv_serror_rate,dst_host_srv_rerror_rate,srv_serror_rate,"
              "srv_rerror_rate,label,difficulty\n";
        const auto& cats = nsl_categories();
        for (std::size_t r = 0; r < cfg.rows; ++r) {
            const LatentRow lat = draw_latent(cats, cfg.attack_spread, rng);
            const auto& u = lat.u;
            auto noise = [&](double s) { return rng.gaussian() * s; };

            const double serror_rate = 1.3 * u[0] + noise(0.2);
            const double count = 1.8 + 1.2 * u[1] + noise(0.2);
            const double srv_count = 0.9 * u[1] + 0.7 * u[0] + noise(0.2);
            const double same_srv_rate = -1.1 * u[2] + noise(0.2);
            const double diff_srv_rate = u[2] * u[2] + 0.3 * u[3] + noise(0.2);
            const double src_bytes = u[0] * u[0] - 0.3 * u[1] + noise(0.2);
            const double dst_bytes = std::fabs(u[3]) + noise(0.2);
            const double duration = 0.8 * std::exp(0.55 * u[2]) + noise(0.2);
            const double dst_host_count = 1.2 * u[3] + 0.5 * u[1] + noise(0.2);
            const double logged_in = u[0] * u[1] + noise(0.2);
            const double rerror_rate = -0.9 * u[0] + 0.8 * u[2] + noise(0.2);
            // near-duplicates
            const double srv_serror_rate = 0.97 * serror_rate + noise(0.12);
            const double dst_host_srv_count = 0.95 * srv_count + noise(0.13);

            std::map<std::string, std::string> row;
            row["duration"] = fmt(duration);
            row["protocol_type"] = pick_categorical(protos, lat.cat_index, rng);
            row["service"] = pick_categorical(services, lat.cat_index, rng);
            row["flag"] = pick_categorical(states, lat.cat_index, rng);
            row["src_bytes"] = fmt(src_bytes);
            row["dst_bytes"] = fmt(dst_bytes);
            row["land"] = fmt(std::floor(rng.uniform() * 2.0));
            row["wrong_fragment"] = fmt(noise(1.0));
            row["urgent"] = fmt(noise(1.0));
            row["hot"] = fmt(noise(1.0));
            row["num_failed_logins"] = fmt(noise(1.0));
            row["logged_in"] = fmt(logged_in);
            row["num_compromised"] = fmt(noise(1.0));
            row["root_shell"] = fmt(noise(1.0));
            row["su_attempted"] = fmt(noise(1.0));
            row["num_root"] = fmt(noise(1.0));
            row["num_file_creations"] = fmt(noise(1.0));
            row["num_shells"] = fmt(noise(1.0));
            row["num_access_files"] = fmt(noise(1.0));
            row["num_outbound_cmds"] = "0";  // constant, as in the real data
            row["is_host_login"] = fmt(std::floor(rng.uniform() * 2.0));
            row["is_guest_login"] = fmt(std::floor(rng.uniform() * 2.0));
            row["count"] = fmt(count);
            row["srv_count"] = fmt(srv_count);
            row["serror_rate"] = fmt(serror_rate);
            row["rerror_rate"] = fmt(rerror_rate);
            row["same_srv_rate"] = fmt(same_srv_rate);
            row["diff_srv_rate"] = fmt(diff_srv_rate);
            row["srv_diff_host_rate"] = fmt(noise(1.0));
            row["dst_host_count"] = fmt(dst_host_count);
            row["dst_host_srv_count"] = fmt(dst_host_srv_count);
            row["dst_host_same_srv_rate"] = fmt(noise(1.0));
            row["dst_host_diff_srv_rate"] = fmt(noise(1.0));
            row["dst_host_same_src_port_rate"] = fmt(noise(1.0));
            row["dst_host_srv_diff_host_rate"] = fmt(noise(1.0));
            row["dst_host_serror_rate"] = fmt(noise(1.0));
            row["dst_host_rerror_rate"] = fmt(noise(1.0));
            row["dst_host_srv_serror_rate"] = fmt(noise(1.0));
            row["dst_host_srv_rerror_rate"] = fmt(noise(1.0));
            row["srv_serror_rate"] = fmt(srv_serror_rate);
            row["srv_rerror_rate"] = fmt(noise(1.0));

            static const char* order[] = {
                "duration", "protocol_type", "service", "flag", "src_bytes", "dst_bytes", "land",
                "wrong_fragment", "urgent", "hot", "num_failed_logins", "logged_in",
                "num_compromised", "root_shell", "su_attempted", "num_root", "num_file_creations",
                "num_shells", "num_access_files", "num_outbound_cmds", "is_host_login",
                "is_guest_login", "count", "srv_count", "serror_rate", "rerror_rate",
                "same_srv_rate", "diff_srv_rate", "srv_diff_host_rate", "dst_host_count",
                "dst_host_srv_count", "dst_host_same_srv_rate", "dst_host_diff_srv_rate",
                "dst_host_same_src_port_rate", "dst_host_srv_diff_host_rate",
                "dst_host_serror_rate", "dst_host_rerror_rate", "dst_host_srv_serror_rate",
                "dst_host_srv_rerror_rate", "srv_serror_rate", "srv_rerror_rate"};
            for (const char* col : order) os << row[col] << ",";
            os << cats[static_cast<std::size_t>(lat.cat_index)].name << ","
               << static_cast<int>(rng.below(22)) << "\n";
        }
    }
    if (!os) throw_data("short write while writing synthetic dataset: " + path);
}

}  // namespace fslpn
